"""Action-cost calibration: Elo ratings from pairwise comparisons, or direct import."""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .ci import EXT, SCHEMA_VERSION

OUTCOMES = (0.0, 0.5, 1.0)


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class Comparison:
    action_a: str
    action_b: str
    outcome: float
    annotator: str | None = None

    def __post_init__(self):
        if self.action_a == self.action_b:
            raise CalibrationError(f"comparison of {self.action_a!r} with itself")
        if self.outcome not in OUTCOMES:
            raise CalibrationError(f"outcome {self.outcome!r} not in {{0, 0.5, 1}}")


@dataclass(frozen=True)
class RatingConfig:
    k_e: float = 400.0
    k_u: float = 32.0
    initial_rating: float = 1000.0
    bootstrap_resamples: int = 1000
    rng_seed: int = 0

    def __post_init__(self):
        if not self.k_e > 0 or not self.k_u > 0:
            raise CalibrationError("k_e and k_u must be positive")
        if self.bootstrap_resamples < 1:
            raise CalibrationError("bootstrap_resamples must be >= 1")


def expected_score(phi_a: float, phi_b: float, k_e: float = 400.0) -> float:
    """Probability that A is judged at least as costly as B."""
    x = (phi_b - phi_a) / k_e
    if x > 0:
        # same value, written so that large rating gaps underflow instead of overflowing
        t = 10.0 ** -x
        return t / (1.0 + t)
    return 1.0 / (1.0 + 10.0**x)


def update(phi_a: float, phi_b: float, outcome: float, config: RatingConfig = RatingConfig()) -> tuple[float, float]:
    if outcome not in OUTCOMES:
        raise CalibrationError(f"outcome {outcome!r} not in {{0, 0.5, 1}}")
    e_a = expected_score(phi_a, phi_b, config.k_e)
    delta = config.k_u * (outcome - e_a)
    # B sees outcome 1 - G_A and expectation 1 - E_A, hence the mirrored delta
    return phi_a + delta, phi_b - delta


def sequential_ratings(
    comparisons: Sequence[Comparison], config: RatingConfig, actions: Iterable[str] = ()
) -> dict[str, float]:
    ratings = {a: config.initial_rating for a in actions}
    for c in comparisons:
        ra = ratings.setdefault(c.action_a, config.initial_rating)
        rb = ratings.setdefault(c.action_b, config.initial_rating)
        ratings[c.action_a], ratings[c.action_b] = update(ra, rb, c.outcome, config)
    return ratings


@dataclass
class BootstrapResult:
    ratings: dict[str, float]
    unrated: list[str]
    resamples: int
    seed: int


def bootstrap_ratings(
    comparisons: Sequence[Comparison],
    config: RatingConfig = RatingConfig(),
    actions: Iterable[str] = (),
) -> BootstrapResult:
    """Median final rating per action over seeded shuffles of the comparison order.

    ``actions`` may list extra action ids; those appearing in no comparison
    keep ``initial_rating`` and are reported in ``unrated``.
    """
    comparisons = list(comparisons)
    if not comparisons:
        raise CalibrationError("no comparisons given")
    compared = sorted({c.action_a for c in comparisons} | {c.action_b for c in comparisons})
    col = {a: i for i, a in enumerate(compared)}
    pairs = np.array([(col[c.action_a], col[c.action_b]) for c in comparisons])
    outcomes = np.array([c.outcome for c in comparisons])
    rng = np.random.default_rng(config.rng_seed)
    finals = np.empty((config.bootstrap_resamples, len(compared)))
    k_e, k_u = config.k_e, config.k_u
    for r in range(config.bootstrap_resamples):
        ratings = [config.initial_rating] * len(compared)
        for i in rng.permutation(len(comparisons)):
            ia, ib = pairs[i]
            ra, rb = ratings[ia], ratings[ib]
            delta = k_u * (outcomes[i] - expected_score(ra, rb, k_e))
            ratings[ia] = ra + delta
            ratings[ib] = rb - delta
        finals[r] = ratings
    medians = np.median(finals, axis=0)
    out = {a: float(medians[col[a]]) for a in compared}
    unrated = sorted(set(actions) - set(compared))
    for a in unrated:
        out[a] = config.initial_rating
    return BootstrapResult(out, unrated, config.bootstrap_resamples, config.rng_seed)


def ratings_to_costs(ratings: Mapping[str, float]) -> tuple[dict[str, float], float]:
    """Shift ratings uniformly so that every cost is nonnegative.

    Returns the cost map and the applied shift; budgets expressed on the
    rating scale must be shifted by the same amount per action.
    """
    shift = max(0.0, -min(ratings.values())) if ratings else 0.0
    return {a: r + shift for a, r in ratings.items()}, shift


# ---------------------------------------------------------------------------
# files


def read_comparisons(path: str | Path) -> list[Comparison]:
    out = []
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                out.append(
                    Comparison(rec["action_a"], rec["action_b"], float(rec["outcome"]), rec.get("annotator"))
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CalibrationError(f"{path}:{lineno}: bad comparison record ({exc})") from exc
    return out


def write_comparisons(comparisons: Iterable[Comparison], path: str | Path) -> None:
    with Path(path).open("w") as fh:
        for c in comparisons:
            rec: dict[str, Any] = {"action_a": c.action_a, "action_b": c.action_b, "outcome": c.outcome}
            if c.annotator is not None:
                rec["annotator"] = c.annotator
            fh.write(json.dumps(rec) + "\n")


def cost_document(costs: Mapping[str, float], source: str, **info: Any) -> dict[str, Any]:
    return {
        EXT: {"x_asm_schema": SCHEMA_VERSION, "kind": "costs", "source": source, **info},
        "costs": {k: costs[k] for k in sorted(costs)},
    }


def import_direct_costs(
    documents: Sequence[Mapping[str, Any]] | Mapping[str, Any],
    action_ids: Iterable[str] | None = None,
) -> dict[str, float]:
    """Expand directly assigned costs (per action or per named group).

    Document shape::

        {"groups": {"<name>": {"cost": 6, "members": ["a1", "a2"]}},
         "costs": {"a3": 14}}

    Raises on negative costs, conflicting assignments and, when
    ``action_ids`` is given, on actions left without a cost.
    """
    if isinstance(documents, Mapping):
        documents = [documents]
    out: dict[str, float] = {}
    origin: dict[str, str] = {}

    def assign(aid: str, value: Any, where: str) -> None:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise CalibrationError(f"{where}: cost for {aid!r} is not a number")
        if value < 0:
            raise CalibrationError(f"{where}: negative cost {value} for {aid!r}")
        if aid in out and out[aid] != float(value):
            raise CalibrationError(
                f"conflicting costs for {aid!r}: {out[aid]} ({origin[aid]}) vs {value} ({where})"
            )
        out[aid] = float(value)
        origin[aid] = where

    for doc in documents:
        for name, group in (doc.get("groups") or {}).items():
            for member in group.get("members", []):
                assign(member, group.get("cost"), f"group {name!r}")
        for aid, value in (doc.get("costs") or {}).items():
            assign(aid, value, "costs")
    if action_ids is not None:
        missing = sorted(set(action_ids) - set(out))
        if missing:
            raise CalibrationError(f"no cost assigned to {len(missing)} action(s): {', '.join(missing[:5])}")
    return out


def merge_cost_maps(
    documents: Sequence[Mapping[str, Any]],
    affine: tuple[float, float] | None = None,
) -> dict[str, float]:
    """Merge cost-map documents into one map.

    Elo-derived and directly assigned costs live on unrelated scales, so
    mixing sources is refused unless ``affine = (scale, offset)`` is given;
    it maps Elo costs onto the direct scale as ``scale * cost + offset``.
    """
    sources = {(d.get(EXT) or {}).get("source", "direct") for d in documents}
    if len(sources) > 1 and affine is None:
        raise CalibrationError(
            f"cost maps from mixed sources {sorted(sources)}; supply an explicit affine mapping"
        )
    out: dict[str, float] = {}
    for d in documents:
        src = (d.get(EXT) or {}).get("source", "direct")
        costs = import_direct_costs(d)
        if affine is not None and src == "elo" and len(sources) > 1:
            scale, offset = affine
            costs = {k: scale * v + offset for k, v in costs.items()}
        for k, v in costs.items():
            if k in out and out[k] != v:
                raise CalibrationError(f"conflicting costs for {k!r} across cost maps")
            out[k] = v
    return out
