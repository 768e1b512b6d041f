"""Simplified multi-feeder distribution grid with a linearized per-phase voltage model.

Power values are per-unit on a per-phase base; voltages are per-unit line-to-
neutral magnitudes. Positive bus power means consumption. The substation bus
is held at ``v0`` on every phase and the network is treated as lossless, so
substation in-feed is the sum of all bus injections.
"""

from __future__ import annotations

import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

PHASES = ("a", "b", "c")
PROFILE_UNITS = "per-unit power on a per-phase base (consumption positive); one value per step"


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class Line:
    name: str
    from_bus: str
    to_bus: str
    r: tuple[float, float, float]
    x: tuple[float, float, float]
    normally_open: bool = False


@dataclass(frozen=True)
class SwitchPair:
    """Two switches operated together: one line opens while a tie line closes."""

    name: str
    open_line: str
    close_line: str


@dataclass(frozen=True)
class Load:
    name: str
    bus: str


@dataclass(frozen=True)
class PV:
    name: str
    bus: str
    rating: float  # three-phase apparent power limit


@dataclass(frozen=True)
class Battery:
    name: str
    bus: str
    rated_power: float  # three-phase
    capacity: float  # per-unit hours
    soc0: float


@dataclass(frozen=True)
class Capacitor:
    name: str
    bus: str
    q_rated: float  # per phase, injected


@dataclass(frozen=True)
class FeederModel:
    name: str
    substation: str
    buses: tuple[str, ...]
    lines: tuple[Line, ...]
    loads: tuple[Load, ...] = ()
    pvs: tuple[PV, ...] = ()
    batteries: tuple[Battery, ...] = ()
    capacitors: tuple[Capacitor, ...] = ()
    switch_pairs: tuple[SwitchPair, ...] = ()
    peak_threshold: float = float("inf")  # three-phase substation active power
    valley_threshold: float = float("-inf")
    v0: float = 1.0
    step_seconds: float = 60.0

    def __post_init__(self):
        idx = {b: i for i, b in enumerate(self.buses)}
        if self.substation not in idx:
            raise TopologyError("substation must be one of the buses")
        names = set()
        for line in self.lines:
            if line.from_bus not in idx or line.to_bus not in idx:
                raise TopologyError(f"line {line.name} references an unknown bus")
            names.add(line.name)
        for sp in self.switch_pairs:
            if sp.open_line not in names or sp.close_line not in names:
                raise TopologyError(f"switch pair {sp.name} references an unknown line")
        self.tree_parents(frozenset())  # radial in the normal configuration

    @property
    def bus_index(self) -> dict[str, int]:
        return {b: i for i, b in enumerate(self.buses)}

    def elements(self) -> dict[str, str]:
        """Element name -> element kind for every attackable element."""
        out = {}
        for kind, items in (
            ("load", self.loads),
            ("pv", self.pvs),
            ("battery", self.batteries),
            ("capacitor", self.capacitors),
            ("switch", self.switch_pairs),
        ):
            for it in items:
                out[it.name] = kind
        return out

    def active_lines(self, operated: frozenset[str]) -> list[Line]:
        opened, closed = set(), set()
        for sp in self.switch_pairs:
            if sp.name in operated:
                opened.add(sp.open_line)
                closed.add(sp.close_line)
        return [
            ln
            for ln in self.lines
            if ln.name not in opened and (not ln.normally_open or ln.name in closed)
        ]

    def tree_parents(self, operated: frozenset[str]) -> dict[str, tuple[str, Line]]:
        """Parent bus and connecting line of every bus; raises unless radial."""
        adj: dict[str, list[tuple[str, Line]]] = {b: [] for b in self.buses}
        active = self.active_lines(operated)
        for ln in active:
            adj[ln.from_bus].append((ln.to_bus, ln))
            adj[ln.to_bus].append((ln.from_bus, ln))
        parents: dict[str, tuple[str, Line]] = {}
        seen = {self.substation}
        stack = [self.substation]
        while stack:
            b = stack.pop()
            for nb, ln in adj[b]:
                if nb in seen:
                    continue
                seen.add(nb)
                parents[nb] = (b, ln)
                stack.append(nb)
        if len(seen) != len(self.buses) or len(active) != len(self.buses) - 1:
            raise TopologyError(
                f"configuration {sorted(operated)} is not radial "
                f"({len(seen)}/{len(self.buses)} buses energized, {len(active)} lines closed)"
            )
        return parents

    def path_matrices(self, operated: frozenset[str]) -> tuple[np.ndarray, np.ndarray]:
        """Per-phase drop sensitivities ``R[ph, j, i]`` and ``X[ph, j, i]``.

        Entry ``(j, i)`` is the impedance shared by the substation paths of
        buses ``j`` and ``i``.
        """
        parents = self.tree_parents(operated)
        idx = self.bus_index
        active = self.active_lines(operated)
        lidx = {ln.name: k for k, ln in enumerate(active)}
        incid = np.zeros((len(self.buses), len(active)))
        for b in self.buses:
            cur = b
            while cur != self.substation:
                parent, ln = parents[cur]
                incid[idx[b], lidx[ln.name]] = 1.0
                cur = parent
        r = np.array([ln.r for ln in active]).T  # (3, n_lines)
        x = np.array([ln.x for ln in active]).T
        R = np.einsum("jk,pk,ik->pji", incid, r, incid)
        X = np.einsum("jk,pk,ik->pji", incid, x, incid)
        return R, X


@dataclass
class OperatingInputs:
    """Per-step load and PV profiles.

    ``load_p``/``load_q`` map load name to an array of shape ``(T, 3)``;
    ``pv_p`` maps PV name to available active output per phase ``(T, 3)``.
    """

    load_p: dict[str, np.ndarray]
    load_q: dict[str, np.ndarray]
    pv_p: dict[str, np.ndarray] = field(default_factory=dict)
    step_seconds: float = 60.0

    @property
    def horizon(self) -> int:
        for arr in list(self.load_p.values()) + list(self.pv_p.values()):
            return int(arr.shape[0])
        return 0

    def to_dict(self) -> dict[str, Any]:
        def ph(arr):
            return {p: arr[:, i].tolist() for i, p in enumerate(PHASES)}

        return {
            "units": PROFILE_UNITS,
            "step_seconds": self.step_seconds,
            "horizon": self.horizon,
            "loads": {n: {"p": ph(self.load_p[n]), "q": ph(self.load_q[n])} for n in sorted(self.load_p)},
            "pv": {n: ph(self.pv_p[n]) for n in sorted(self.pv_p)},
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> OperatingInputs:
        def arr(phd):
            return np.column_stack([np.asarray(phd[p], dtype=float) for p in PHASES])

        return cls(
            load_p={n: arr(v["p"]) for n, v in d.get("loads", {}).items()},
            load_q={n: arr(v["q"]) for n, v in d.get("loads", {}).items()},
            pv_p={n: arr(v) for n, v in d.get("pv", {}).items()},
            step_seconds=float(d.get("step_seconds", 60.0)),
        )


def save_profiles(inputs: OperatingInputs, path: str | Path) -> None:
    Path(path).write_text(json.dumps(inputs.to_dict()))


def load_profiles(path: str | Path) -> OperatingInputs:
    return OperatingInputs.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# bundled feeders


def _line(name, a, b, r, x=None, normally_open=False, unbalance=(1.0, 1.0, 1.0)):
    x = 2.0 * r if x is None else x
    return Line(
        name, a, b, tuple(r * u for u in unbalance), tuple(x * u for u in unbalance), normally_open
    )


def micro6() -> FeederModel:
    """Five-line feeder used for hand-checkable voltage drops."""
    buses = ("0", "1", "2", "3", "4", "5")
    lines = (
        _line("0-1", "0", "1", 0.01, 0.02),
        _line("1-2", "1", "2", 0.02, 0.01),
        _line("2-3", "2", "3", 0.015, 0.03),
        _line("1-4", "1", "4", 0.03, 0.02),
        _line("4-5", "4", "5", 0.01, 0.01),
    )
    loads = (Load("load:3", "3"), Load("load:5", "5"))
    return FeederModel("micro6", "0", buses, lines, loads=loads)


def micro6_inputs(horizon: int = 4) -> OperatingInputs:
    t = np.arange(horizon)[:, None]
    p3 = np.array([0.10, 0.05, 0.02]) * (1 + 0.1 * t)
    q3 = np.array([0.03, 0.01, 0.00]) * (1 + 0.1 * t)
    p5 = np.array([0.01, 0.08, 0.04]) * np.ones_like(t, dtype=float)
    q5 = np.array([0.00, 0.02, 0.02]) * np.ones_like(t, dtype=float)
    return OperatingInputs({"load:3": p3, "load:5": p5}, {"load:3": q3, "load:5": q5})


def small() -> FeederModel:
    """Four-bus feeder behind the small CI fixture."""
    buses = ("0", "1", "2", "3", "4")
    lines = (
        _line("0-1", "0", "1", 0.02),
        _line("1-2", "1", "2", 0.03),
        _line("2-3", "2", "3", 0.03),
        _line("1-4", "1", "4", 0.04),
    )
    return FeederModel(
        "small",
        "0",
        buses,
        lines,
        loads=(Load("load:2", "2"), Load("load:3", "3"), Load("load:4", "4")),
        pvs=(PV("pv:4", "4", 0.3),),
        capacitors=(Capacitor("cap:2", "2", 0.03),),
    )


def small_inputs(horizon: int = 60) -> OperatingInputs:
    h = np.linspace(0.0, 1.0, horizon)[:, None]
    shape = 0.9 + 0.2 * h
    sun = np.sin(np.pi * (0.25 + 0.5 * h)) ** 2
    load_p = {
        "load:2": np.array([0.10, 0.10, 0.10]) * shape,
        "load:3": np.array([0.16, 0.06, 0.08]) * shape,
        "load:4": np.array([0.05, 0.09, 0.07]) * shape,
    }
    load_q = {k: 0.4 * v for k, v in load_p.items()}
    pv_p = {"pv:4": np.array([0.08, 0.08, 0.08]) * sun}
    return OperatingInputs(load_p, load_q, pv_p)


MEDIUM_BATTERY_SLOTS = (33, 48, 71)


def medium(seed: int = 123) -> FeederModel:
    """Two mirrored radial feeders on one substation with a normally open tie.

    Feeder 1 buses ``f1_01..f1_46``, feeder 2 ``f2_01..f2_45`` (91 load
    buses, one load and one PV each), three batteries, four capacitor banks
    and one switch pair that moves feeder 2 onto feeder 1.
    """
    rng = np.random.default_rng(seed)
    buses = ["sub"]
    lines: list[Line] = []
    n_per = {1: 46, 2: 45}
    for f, n in n_per.items():
        names = [f"f{f}_{i:02d}" for i in range(1, n + 1)]
        buses += names
        # trunk of 12 buses, laterals hanging off recent buses
        for i, b in enumerate(names):
            if i == 0:
                parent = "sub"
            elif i < 12:
                parent = names[i - 1]
            else:
                parent = names[int(rng.integers(max(1, i - 10), i))]
            r = float(rng.uniform(0.004, 0.009)) if i < 12 else float(rng.uniform(0.006, 0.014))
            unb = tuple(float(u) for u in rng.uniform(0.9, 1.1, size=3))
            lines.append(_line(f"{parent}-{b}", parent, b, r, 2.1 * r, unbalance=unb))
    # tie between the far ends of the two trunks; head of feeder 2 opens
    lines.append(_line("tie", "f1_12", "f2_12", 0.008, 0.016, normally_open=True))
    switch_pairs = (SwitchPair("switch:tie", "sub-f2_01", "tie"),)

    load_buses_ = [b for b in buses if b != "sub"]
    loads = tuple(Load(f"load:{b}", b) for b in load_buses_)
    pvs = tuple(PV(f"pv:{b}", b, float(rng.uniform(0.03, 0.07))) for b in load_buses_)
    # slots count load buses across both feeders: 1..46 feeder 1, 47..91 feeder 2
    bats = []
    for slot in MEDIUM_BATTERY_SLOTS:
        b = load_buses_[slot - 1]
        bats.append(Battery(f"battery:{b}", b, 0.45, 0.6, 0.3))
    caps = tuple(
        Capacitor(f"cap:{b}", b, q) for b, q in (("f1_08", 0.09), ("f1_30", 0.06), ("f2_08", 0.09), ("f2_30", 0.06))
    )
    return FeederModel(
        "medium",
        "sub",
        tuple(buses),
        tuple(lines),
        loads=loads,
        pvs=pvs,
        batteries=tuple(bats),
        capacitors=caps,
        switch_pairs=switch_pairs,
        peak_threshold=4.6,
        valley_threshold=3.1,
    )


def medium_inputs(model: FeederModel | None = None, horizon: int = 240, seed: int = 321) -> OperatingInputs:
    """Four-hour morning window (09:00 to 13:00) sampled every 60 s."""
    model = model or medium()
    rng = np.random.default_rng(seed)
    h = np.linspace(0.0, 1.0, horizon)[:, None]
    # load rises through late morning, PV follows the sun towards noon
    load_shape = 0.85 + 0.25 * h + 0.03 * np.sin(6 * np.pi * h)
    sun = np.clip(np.sin(np.pi * (0.35 + 0.55 * h)), 0, None) ** 1.5
    load_p, load_q, pv_p = {}, {}, {}
    for ld in model.loads:
        base = float(rng.uniform(0.012, 0.03))
        kind = rng.random()
        if kind < 0.45:  # single-phase dominated
            w = np.full(3, 0.35)
            w[int(rng.integers(0, 3))] = 2.3
        else:
            w = rng.uniform(0.8, 1.2, size=3)
        w = 3 * w / w.sum()
        noise = 1 + 0.02 * rng.standard_normal((horizon, 1))
        p = base * w * load_shape * noise
        load_p[ld.name] = p
        load_q[ld.name] = p * float(rng.uniform(0.35, 0.5))
    for pv in model.pvs:
        cloud = 1 - 0.15 * np.clip(rng.standard_normal((horizon, 1)), 0, None) * 0.3
        pv_p[pv.name] = (pv.rating / 3.0) * 0.85 * sun * cloud * np.ones(3)
    return OperatingInputs(load_p, load_q, pv_p)


PRESETS = {
    "micro6": (micro6, micro6_inputs),
    "small": (small, small_inputs),
    "medium": (medium, medium_inputs),
}


def preset(name: str) -> tuple[FeederModel, OperatingInputs]:
    try:
        build_model, build_inputs = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown feeder preset {name!r}; known: {sorted(PRESETS)}") from None
    model = build_model()
    if name == "medium":
        return model, build_inputs(model)
    return model, build_inputs()


def load_buses(model: FeederModel) -> Sequence[str]:
    return [ld.bus for ld in model.loads]
