"""Random attack-scenario baseline, empirical CDF scoring and budget breakdowns."""

from __future__ import annotations

import gzip
import hashlib
import json
import math
import random
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy.stats import binomtest

from .asm import AugmentedModel
from .ci import CI, Category
from .sdmo import random_walk

BREAKDOWN_KEYS = ("access_entry", "access_lateral", "exploit", "impact")


def sequence_hash(actions: Sequence[str]) -> str:
    return hashlib.sha256("\x1f".join(actions).encode()).hexdigest()[:32]


@dataclass
class Sample:
    hash: str
    actions: tuple[str, ...]
    y: float


@dataclass
class SampleSet:
    samples: list[Sample]
    seed: int
    budget: float
    ci_fingerprint: str
    shortfall: bool = False
    attempts: int = 0
    manifest: dict[str, Any] = field(default_factory=dict)

    @property
    def ys(self) -> np.ndarray:
        return np.array([s.y for s in self.samples])

    def __len__(self) -> int:
        return len(self.samples)

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": "sample_set",
            "seed": self.seed,
            "budget": self.budget,
            "ci_fingerprint": self.ci_fingerprint,
            "shortfall": self.shortfall,
            "attempts": self.attempts,
            "manifest": self.manifest,
            "samples": [{"hash": s.hash, "actions": list(s.actions), "y": s.y} for s in self.samples],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> SampleSet:
        return cls(
            [Sample(s["hash"], tuple(s["actions"]), float(s["y"])) for s in d["samples"]],
            int(d["seed"]),
            float(d["budget"]),
            d["ci_fingerprint"],
            bool(d.get("shortfall", False)),
            int(d.get("attempts", 0)),
            dict(d.get("manifest") or {}),
        )

    def save(self, path: str | Path) -> None:
        """JSON, gzip-compressed when the file name ends in ``.gz``."""
        data = json.dumps(self.to_dict(), separators=(",", ":")).encode()
        path = Path(path)
        if path.suffix == ".gz":
            # fixed mtime and no embedded file name keep the archive byte-identical
            with path.open("wb") as raw, gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as fh:
                fh.write(data)
        else:
            path.write_bytes(data)

    @classmethod
    def load(cls, path: str | Path) -> SampleSet:
        raw = Path(path).read_bytes()
        if raw[:2] == b"\x1f\x8b":
            raw = gzip.decompress(raw)
        return cls.from_dict(json.loads(raw))


def sample_random(
    model: AugmentedModel,
    budget: float,
    count: int,
    seed: int,
    max_consecutive_duplicates: int = 1000,
) -> SampleSet:
    """Distinct feasible terminal scenarios from uniform random walks.

    Duplicated sequences are rejected and redrawn. When
    ``max_consecutive_duplicates`` draws in a row are all duplicates the
    feasible space is taken as exhausted and the set is flagged short.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    model.check_handlers()
    engine = model.engine
    rng = random.Random(seed)
    root = engine.init_states()
    seen: set[str] = set()
    samples: list[Sample] = []
    attempts = dup_run = 0
    shortfall = False
    while len(samples) < count:
        attempts += 1
        terminal = random_walk(engine, root, budget, rng)
        h = sequence_hash(terminal.action_log)
        if h in seen:
            dup_run += 1
            if dup_run >= max_consecutive_duplicates:
                shortfall = True
                break
            continue
        dup_run = 0
        seen.add(h)
        samples.append(Sample(h, terminal.action_log, model.y(terminal.action_log)))
    return SampleSet(samples, seed, budget, model.ci.fingerprint(), shortfall, attempts)


def merge_sample_sets(sets: Iterable[SampleSet]) -> SampleSet:
    """Union of sample sets (same CI and budget), deduplicated by sequence hash."""
    sets = list(sets)
    if not sets:
        raise ValueError("nothing to merge")
    first = sets[0]
    for s in sets[1:]:
        if s.ci_fingerprint != first.ci_fingerprint or s.budget != first.budget:
            raise ValueError("sample sets come from different CIs or budgets")
    seen: set[str] = set()
    merged = []
    for s in sets:
        for smp in s.samples:
            if smp.hash not in seen:
                seen.add(smp.hash)
                merged.append(smp)
    return SampleSet(
        merged,
        first.seed,
        first.budget,
        first.ci_fingerprint,
        any(s.shortfall for s in sets),
        sum(s.attempts for s in sets),
    )


@dataclass(frozen=True)
class PCDF:
    value: float
    low: float
    high: float
    n: int
    worse: int

    def to_dict(self) -> dict[str, Any]:
        return {"p_cdf": self.value, "ci95": [self.low, self.high], "n": self.n, "n_less_damaging": self.worse}


def p_cdf(samples: SampleSet | Sequence[float] | np.ndarray, y_star: float) -> PCDF:
    """Fraction of samples strictly less damaging (higher y) than ``y_star``.

    Ties count against the optimizer. The interval is the Wilson 95% score
    interval.
    """
    ys = samples.ys if isinstance(samples, SampleSet) else np.asarray(samples, dtype=float)
    n = len(ys)
    if n == 0:
        raise ValueError("no samples")
    k = int(np.count_nonzero(ys > y_star))
    ci = binomtest(k, n).proportion_ci(confidence_level=0.95, method="wilson")
    return PCDF(k / n, float(ci.low), float(ci.high), n, k)


def ecdf(ys: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    xs = np.sort(np.asarray(ys, dtype=float))
    return xs, np.arange(1, len(xs) + 1) / len(xs)


def budget_breakdown(actions: Sequence[str], ci: CI) -> dict[str, float]:
    """Share of spent budget per access-entry / access-lateral / exploit / impact."""
    spent = dict.fromkeys(BREAKDOWN_KEYS, 0.0)
    for aid in actions:
        a = ci.actions[aid]
        if a.category is Category.ACCESS:
            spent["access_entry" if a.entry_point else "access_lateral"] += a.cost
        else:
            spent[a.category.value] += a.cost
    total = math.fsum(spent.values())
    if total == 0:
        return dict.fromkeys(BREAKDOWN_KEYS, 0.0)
    return {k: v / total for k, v in spent.items()}
