"""Command-line workflow: validate → derive-links → calibrate → optimize → baseline → score / report.

Exit codes: 0 success, 1 validation or user error, 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import secrets
import sys
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from . import __version__
from .asm import build_model
from .baseline import SampleSet, p_cdf, sample_random
from .calibration import (
    CalibrationError,
    RatingConfig,
    bootstrap_ratings,
    cost_document,
    import_direct_costs,
    merge_cost_maps,
    ratings_to_costs,
    read_comparisons,
)
from .ci import (
    CI,
    CIError,
    LogicalLinkError,
    devices_of_type,
    derive_logical_links,
    load_ci,
    read_document,
    validate_ci,
    write_document,
)
from .engine import LINK_UNLOCK_MODES, TransitionError, write_trace
from .report import (
    ReportError,
    build_report,
    format_report,
    format_summary,
    summarize_runs,
    timing_path,
)
from .sdmo import SearchConfig, search
from .simulation.scenario import ScenarioError
from .simulation.sm import UnsupportedHandler

log = logging.getLogger("cyberasm")

USER_ERRORS = (
    CIError,
    CalibrationError,
    LogicalLinkError,
    ReportError,
    ScenarioError,
    TransitionError,
    UnsupportedHandler,
    FileNotFoundError,
    json.JSONDecodeError,
    ValueError,
)


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# manifests


def timestamp() -> str:
    """UTC timestamp, pinned by ``SOURCE_DATE_EPOCH`` for reproducible artifacts."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return when.strftime("%Y-%m-%dT%H:%M:%SZ")


def resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    seed = secrets.randbelow(2**31)
    print(f"seed: {seed}", file=sys.stderr)
    return seed


def manifest(command: str, ci: CI | None = None, **fields: Any) -> dict[str, Any]:
    out: dict[str, Any] = {"tool": "cyberasm", "version": __version__, "command": command}
    if ci is not None:
        out["ci_fingerprint"] = ci.fingerprint()
    out.update(fields)
    out["created"] = timestamp()
    return out


def dump(doc: Any, path: str | Path | None) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def emit(args, text: str, data: Any) -> None:
    if args.format == "json":
        print(json.dumps(data, indent=2))
    else:
        print(text)


def default_budget(ci: CI, given: float | None) -> float:
    if given is not None:
        return given
    budget = (ci.meta.get("x_asm") or {}).get("budget")
    if budget is None:
        raise UsageError("no --budget given and the CI declares no x_asm.budget")
    return float(budget)


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args) -> int:
    docs = [read_document(p) for p in args.ci]
    try:
        report = validate_ci(load_ci(docs))
    except CIError as exc:
        violations = [v.to_dict() for v in exc.violations] if exc.violations else [
            {"severity": "error", "code": "parse", "entity": None, "message": str(exc), "document": None}
        ]
        if args.format == "json":
            print(json.dumps(violations, indent=2))
        else:
            for v in violations:
                where = f" [{v['document']}]" if v.get("document") else ""
                print(f"{v['severity']}: {v['code']}: {v['entity']}: {v['message']}{where}")
            print(f"{len(violations)} violation(s)")
        return 1
    if args.format == "json":
        print(json.dumps(report.to_list(), indent=2))
    else:
        print("valid: 0 violations")
    return 0


def cmd_derive_links(args) -> int:
    doc = read_document(args.ci)
    sources = list(args.sources or []) + devices_of_type(doc, args.source_types or [])
    sinks = list(args.sinks or []) + devices_of_type(doc, args.sink_types or [])
    if not sources or not sinks:
        raise UsageError("need at least one source and one sink (--sources/--source-types, --sinks/--sink-types)")
    out = derive_logical_links(doc, sources, sinks, strict=args.strict)
    if args.out:
        write_document(out, args.out)
    else:
        dump(out, None)
    n = sum(len((lk.get("properties") or {}).get("logical_links", [])) for lk in out.get("links", []))
    if args.out:
        emit(args, f"wrote {args.out}: {n} logical-link entries over {len(out.get('links', []))} links",
             {"out": args.out, "entries": n})
    return 0


def cmd_calibrate(args) -> int:
    seed = resolve_seed(args)
    actions: list[str] = []
    if args.ci:
        actions = sorted(load_ci(args.ci).actions)
    docs = []
    if args.comparisons:
        comparisons = read_comparisons(args.comparisons)
        cfg = RatingConfig(k_e=args.k_e, k_u=args.k_u, initial_rating=args.initial_rating,
                           bootstrap_resamples=args.resamples, rng_seed=seed)
        result = bootstrap_ratings(comparisons, cfg, actions)
        costs, shift = ratings_to_costs(result.ratings)
        docs.append(cost_document(costs, "elo", shift=shift, unrated=result.unrated,
                                  ratings={k: result.ratings[k] for k in sorted(result.ratings)}))
    for path in args.direct or []:
        d = read_document(path)
        docs.append(cost_document(import_direct_costs(d), "direct"))
    if not docs:
        raise UsageError("give --comparisons and/or --direct")
    affine = tuple(args.affine) if args.affine else None
    costs = merge_cost_maps(docs, affine)
    source = docs[0]["x_asm"]["source"] if len(docs) == 1 else "merged"
    info = {k: v for k, v in docs[0]["x_asm"].items() if k in ("shift", "unrated", "ratings")} if len(docs) == 1 else {}
    out = cost_document(
        costs,
        source,
        **info,
        manifest=manifest("calibrate", seeds={"bootstrap": seed}, resamples=args.resamples,
                          inputs={"comparisons": args.comparisons, "direct": args.direct or []},
                          outputs=[args.out] if args.out else []),
    )
    dump(out, args.out)
    if args.out:
        emit(args, f"wrote {len(costs)} costs to {args.out}", {"out": args.out, "n_costs": len(costs)})
    return 0


def cmd_optimize(args) -> int:
    seed = resolve_seed(args)
    ci = load_ci(args.ci)
    model = build_model(ci, args.sm, args.link_unlock_via)
    cfg = SearchConfig(
        budget=default_budget(ci, args.budget),
        iterations=args.iterations,
        exploration_constant=args.exploration_constant,
        rollout_depth_limit=args.rollout_depth_limit,
        rng_seed=seed,
        time_limit=args.time_limit,
    )
    started = time.monotonic()
    path = search(model, cfg)
    duration = time.monotonic() - started
    doc = path.to_document(model, step_y=not args.no_step_y)
    doc["manifest"] = manifest(
        "optimize",
        ci,
        ci_paths=[str(p) for p in args.ci],
        sm=args.sm or ("cmd:" + os.environ["ASM_SM_CMD"] if os.environ.get("ASM_SM_CMD") else "builtin"),
        link_unlock_via=model.engine.link_unlock_via,
        config=cfg.to_dict(),
        seeds={"search": seed},
        outputs=[p for p in (args.out, args.trace) if p],
    )
    dump(doc, args.out)
    if args.out and args.out != "-":
        dump({"duration_s": duration, "finished": datetime.now(timezone.utc).isoformat()}, timing_path(args.out))
    if args.trace:
        with open(args.trace, "w") as fh:
            write_trace(doc["trace"], fh)
    if args.out and args.out != "-":
        text = f"y = {path.y:.6f} with {len(path.actions)} actions, cost {path.total_cost:g}/{cfg.budget:g}"
        if path.flags:
            text += f" [{', '.join(path.flags)}]"
        emit(args, text, {"y": path.y, "actions": path.actions, "total_cost": path.total_cost,
                          "flags": path.flags, "out": args.out, "duration_s": duration})
    return 0


def cmd_baseline(args) -> int:
    seed = resolve_seed(args)
    ci = load_ci(args.ci)
    model = build_model(ci, args.sm, args.link_unlock_via)
    budget = default_budget(ci, args.budget)
    started = time.monotonic()
    samples = sample_random(model, budget, args.count, seed, args.max_duplicates)
    duration = time.monotonic() - started
    samples.manifest = manifest(
        "baseline",
        ci,
        ci_paths=[str(p) for p in args.ci],
        sm=args.sm or "builtin",
        link_unlock_via=model.engine.link_unlock_via,
        count=args.count,
        seeds={"sampling": seed},
        outputs=[args.out],
    )
    samples.save(args.out)
    dump({"duration_s": duration}, timing_path(args.out))
    text = f"wrote {len(samples)} distinct samples to {args.out}"
    if samples.shortfall:
        text += f" (shortfall: feasible space exhausted below the requested {args.count})"
    emit(args, text, {"out": args.out, "n": len(samples), "shortfall": samples.shortfall,
                      "duration_s": duration})
    return 0


def cmd_score(args) -> int:
    doc = json.loads(Path(args.path).read_text())
    samples = SampleSet.load(args.samples)
    from .report import check_manifests

    check_manifests(doc, samples)
    score = p_cdf(samples, doc["y"])
    emit(args, f"p_CDF = {score.value:.4f} (95% CI {score.low:.4f}-{score.high:.4f}, "
               f"{score.worse}/{score.n} samples less damaging)", score.to_dict())
    return 0


def cmd_report(args) -> int:
    samples = SampleSet.load(args.samples) if args.samples else None
    if args.runs:
        rows = summarize_runs(args.runs, samples)
        if args.out:
            dump(rows, args.out)
        emit(args, format_summary(rows), rows)
        return 0
    if not args.path:
        raise UsageError("give --path (or --runs for a multi-run summary)")
    doc = json.loads(Path(args.path).read_text())
    ci = load_ci(args.ci) if args.ci else None
    image = args.image
    if samples is not None and image is None and args.out and args.out != "-":
        image = str(Path(args.out).with_suffix(".png"))
    report = build_report(doc, samples, ci, image)
    for w in report["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    if args.out:
        dump(report, args.out)
    emit(args, format_report(report), report)
    return 0


# ---------------------------------------------------------------------------
# parser


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--format", choices=("text", "json"), default=d if suppress else "text",
                        help="output format for results on standard output")
    parser.add_argument("--seed", type=int, default=d, help="random seed (generated and printed if absent)")
    parser.add_argument("--out", default=d, help="output file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cyberasm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, suppress=True)
        p.set_defaults(func=func)
        return p

    def model_flags(p):
        p.add_argument("--ci", nargs="+", required=True, help="CI document(s): topology plus overlays")
        p.add_argument("--sm", default=None, help="builtin, builtin:<preset> or cmd:<command> (default: $ASM_SM_CMD or builtin)")
        p.add_argument("--budget", type=float, default=None, help="attack budget (default: x_asm.budget)")
        p.add_argument("--link-unlock-via", choices=LINK_UNLOCK_MODES, default=None)

    p = add("validate", cmd_validate, "check a CI document set")
    p.add_argument("ci", nargs="+")

    p = add("derive-links", cmd_derive_links, "fill logical links from source/sink devices")
    p.add_argument("ci")
    p.add_argument("--sources", nargs="*")
    p.add_argument("--source-types", nargs="*")
    p.add_argument("--sinks", nargs="*")
    p.add_argument("--sink-types", nargs="*")
    p.add_argument("--strict", action="store_true", help="fail on equal-length alternative paths")

    p = add("calibrate", cmd_calibrate, "action costs from pairwise comparisons (Elo) or direct assignment")
    p.add_argument("--comparisons")
    p.add_argument("--direct", nargs="*", help="direct cost documents (groups/costs)")
    p.add_argument("--ci", nargs="+", help="CI whose uncompared actions keep the initial rating")
    p.add_argument("--resamples", type=int, default=1000)
    p.add_argument("--k-e", type=float, default=400.0)
    p.add_argument("--k-u", type=float, default=32.0)
    p.add_argument("--initial-rating", type=float, default=1000.0)
    p.add_argument("--affine", type=float, nargs=2, metavar=("SCALE", "OFFSET"),
                   help="map Elo costs onto the direct scale when mixing sources")

    p = add("optimize", cmd_optimize, "search the most damaging attack path")
    model_flags(p)
    p.add_argument("--iterations", type=int, default=1000, help="MCTS iterations per decision step")
    p.add_argument("--exploration-constant", "-c", type=float, default=math.sqrt(2))
    p.add_argument("--rollout-depth-limit", type=int, default=None)
    p.add_argument("--time-limit", type=float, default=None, help="wall-clock cap per decision step [s]")
    p.add_argument("--trace", help="also write the replay trace as JSON lines")
    p.add_argument("--no-step-y", action="store_true", help="skip per-step KPI evaluation")

    p = add("baseline", cmd_baseline, "random-walk sample set for p_CDF scoring")
    model_flags(p)
    p.add_argument("--count", type=int, default=5000)
    p.add_argument("--max-duplicates", type=int, default=1000,
                   help="consecutive duplicate draws taken as exhaustion")

    p = add("score", cmd_score, "p_CDF of an attack path against a sample set")
    p.add_argument("--path", required=True)
    p.add_argument("--samples", required=True)

    p = add("report", cmd_report, "static report (text/JSON + ECDF image)")
    p.add_argument("--path")
    p.add_argument("--samples")
    p.add_argument("--ci", nargs="+", help="CI for richer narrative")
    p.add_argument("--image", help="ECDF image path (default: next to --out)")
    p.add_argument("--runs", help="directory of attack path documents for a multi-run summary")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command in ("baseline",) and not args.out:
        parser.error("baseline needs --out")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
