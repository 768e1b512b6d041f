"""Static result reports: narrative, p_CDF, budget split, per-step KPI trace and ECDF plot."""

from __future__ import annotations

import json
import math
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any

import numpy as np

from .baseline import BREAKDOWN_KEYS, SampleSet, ecdf, p_cdf
from .ci import CI, Category


class ReportError(ValueError):
    pass


def timing_path(path: str | Path) -> Path:
    """Sidecar holding wall-clock durations, kept out of the deterministic document."""
    path = Path(path)
    return path.with_name(path.name.removesuffix(".json") + ".timing.json")


def fingerprint_of(doc: Mapping[str, Any]) -> str | None:
    if "ci_fingerprint" in doc:
        return doc["ci_fingerprint"]
    return (doc.get("manifest") or {}).get("ci_fingerprint")


def check_manifests(path_doc: Mapping[str, Any], samples: SampleSet) -> None:
    fp_path, fp_samples = fingerprint_of(path_doc), samples.ci_fingerprint
    if fp_path is None:
        raise ReportError("attack path document carries no CI fingerprint (not produced by this tool?)")
    if fp_path != fp_samples:
        raise ReportError(f"CI fingerprint mismatch: path {fp_path[:12]}… vs samples {fp_samples[:12]}…")
    if float(path_doc["budget"]) != samples.budget:
        raise ReportError(f"budget mismatch: path {path_doc['budget']} vs samples {samples.budget}")


def narrative(trace: Sequence[Mapping[str, Any]], ci: CI | None = None) -> list[str]:
    """One sentence per step, e.g. entry point, lateral move, exploit, impact."""
    lines = []
    for rec in trace:
        aid, cat = rec["action"], rec["category"]
        owner = ci.owner[aid][1] if ci is not None else None
        where = f" on {owner}" if owner else ""
        if cat == Category.ACCESS.value:
            verb = "Entry point" if rec["entry_point"] else "Lateral access"
            text = f"{verb}: {aid}{where}"
        elif cat == Category.EXPLOIT.value:
            revealed = sorted(k for k, (old, _) in rec["delta"]["devices"].items() if old == "not_visible")
            opened = sorted(k for k, (_, new) in rec["delta"]["actions"].items() if new == "accessible")
            text = f"Exploit: {aid}{where}"
            if revealed:
                text += f", revealing {', '.join(revealed)}"
            if opened:
                text += f", unlocking {len(opened)} action(s)"
        else:
            text = f"Impact: {aid}"
            if ci is not None:
                a = ci.actions[aid]
                text += f" ({a.impact_handler}"
                if a.logical_link:
                    text += f" injected on {a.logical_link[0]}→{a.logical_link[1]}"
                text += ")"
        lines.append(f"{rec['step']}. {text} [cost {rec['cost']:g}, spent {rec['cumulative_cost']:g}]")
    return lines


def breakdown_from_trace(trace: Sequence[Mapping[str, Any]]) -> dict[str, float]:
    spent = dict.fromkeys(BREAKDOWN_KEYS, 0.0)
    for rec in trace:
        if rec["category"] == Category.ACCESS.value:
            spent["access_entry" if rec["entry_point"] else "access_lateral"] += rec["cost"]
        else:
            spent[rec["category"]] += rec["cost"]
    total = math.fsum(spent.values())
    return {k: (v / total if total else 0.0) for k, v in spent.items()}


def render_ecdf(ys: Sequence[float], y_star: float | None, path: str | Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xs, ps = ecdf(ys)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.step(xs, ps, where="post", label=f"random baseline (n={len(xs)})")
    if y_star is not None:
        ax.axvline(y_star, color="tab:red", linestyle="--", label=f"optimized y = {y_star:.4f}")
    ax.set_xlabel("y (VISPF)")
    ax.set_ylabel("empirical CDF")
    ax.legend(loc="lower right")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def build_report(
    path_doc: Mapping[str, Any],
    samples: SampleSet | None = None,
    ci: CI | None = None,
    image_path: str | Path | None = None,
) -> dict[str, Any]:
    trace = path_doc["trace"]
    report: dict[str, Any] = {
        "kind": "report",
        "actions": list(path_doc["actions"]),
        "y": path_doc["y"],
        "total_cost": path_doc["total_cost"],
        "budget": path_doc["budget"],
        "narrative": narrative(trace, ci),
        "budget_breakdown": breakdown_from_trace(trace),
        "step_y": list(path_doc.get("step_y") or []),
        "warnings": [],
    }
    if path_doc.get("kpi"):
        kpi = path_doc["kpi"]
        report["kpi_trace"] = {k: kpi[k] for k in ("vi_series", "spf_series", "vispf_series") if k in kpi}
    if samples is None:
        report["warnings"].append("no baseline samples given: p_CDF section omitted")
        return report
    check_manifests(path_doc, samples)
    score = p_cdf(samples, path_doc["y"])
    report["p_cdf"] = score.to_dict()
    xs, ps = ecdf(samples.ys)
    report["ecdf"] = {"y": xs.tolist(), "p": ps.tolist()}
    if samples.shortfall:
        report["warnings"].append(f"baseline shortfall: only {len(samples)} distinct scenarios exist")
    if image_path is not None:
        report["ecdf_image"] = str(render_ecdf(samples.ys, path_doc["y"], image_path))
    return report


def format_report(report: Mapping[str, Any]) -> str:
    out = [f"Attack path ({len(report['actions'])} actions, cost {report['total_cost']:g} of {report['budget']:g})"]
    out += ["  " + line for line in report["narrative"]]
    out.append(f"y = {report['y']:.6f}")
    if "p_cdf" in report:
        p = report["p_cdf"]
        out.append(f"p_CDF = {p['p_cdf']:.4f} (95% CI {p['ci95'][0]:.4f}-{p['ci95'][1]:.4f}, n = {p['n']})")
    split = report["budget_breakdown"]
    out.append("budget split: " + ", ".join(f"{k} {100 * split[k]:.0f}%" for k in BREAKDOWN_KEYS))
    if report.get("step_y"):
        out.append("y after each step: " + ", ".join(f"{v:.4f}" for v in report["step_y"]))
    if report.get("ecdf_image"):
        out.append(f"ECDF plot: {report['ecdf_image']}")
    out += [f"warning: {w}" for w in report["warnings"]]
    return "\n".join(out)


def summarize_runs(directory: str | Path, samples: SampleSet | None = None) -> list[dict[str, Any]]:
    """One row (iterations, duration, p_CDF) per attack path document in ``directory``."""
    rows = []
    for path in sorted(Path(directory).glob("*.json")):
        if path.name.endswith(".timing.json"):
            continue
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError):
            continue
        if not isinstance(doc, dict) or doc.get("kind") != "attack_path":
            continue
        manifest = doc.get("manifest") or {}
        timing = timing_path(path)
        duration = json.loads(timing.read_text()).get("duration_s") if timing.exists() else None
        pc = doc.get("p_cdf")
        if samples is not None:
            check_manifests(doc, samples)
            pc = p_cdf(samples, doc["y"]).value
        elif isinstance(pc, Mapping):
            pc = pc.get("p_cdf")
        rows.append(
            {
                "run": path.stem,
                "iterations": (manifest.get("config") or {}).get("iterations", doc.get("stats", {}).get("iterations")),
                "duration_s": duration,
                "y": doc["y"],
                "p_cdf": pc,
            }
        )
    return rows


def format_summary(rows: Sequence[Mapping[str, Any]]) -> str:
    head = f"{'run':<24} {'iterations':>10} {'duration [s]':>13} {'y':>10} {'p_CDF':>8}"
    out = [head, "-" * len(head)]
    for r in rows:
        dur = "-" if r["duration_s"] is None else f"{r['duration_s']:.1f}"
        pc = "-" if r["p_cdf"] is None else f"{r['p_cdf']:.3f}"
        out.append(f"{r['run']:<24} {r['iterations']!s:>10} {dur:>13} {r['y']:>10.5f} {pc:>8}")
    if rows and all(r["p_cdf"] is not None for r in rows):
        out.append(f"mean p_CDF {np.mean([r['p_cdf'] for r in rows]):.3f}")
    return "\n".join(out)
