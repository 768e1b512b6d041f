"""Simulation-model contract, the bundled feeder simulator and an external-process adapter."""

from __future__ import annotations

import json
import math
import shlex
import subprocess
import threading
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Any, Protocol

import numpy as np

from .feeder import FeederModel, OperatingInputs, PHASES, preset
from .kpi import compute_spf, compute_vi, compute_vispf
from .scenario import ImpactEvent, KPIResult, Scenario

HANDLER_KIND = {
    "pv_disconnect": "pv",
    "pv_volt_breakpoints": "pv",
    "pv_unbalanced": "pv",
    "battery_mode_override": "battery",
    "battery_max_discharge": "battery",
    "battery_max_charge": "battery",
    "battery_settings": "battery",
    "switch_topology": "switch",
    "capacitor_curtailment": "capacitor",
    "load_scaling": "load",
}
SUPPORTED_HANDLERS = frozenset(HANDLER_KIND)
# representable in a CI, rejected by the bundled simulator
REGULATOR_HANDLERS = frozenset(
    {"regulator_settings", "regulator_deactivate", "regulator_prohibit_control", "regulator_taps"}
)

FORCE_NONE, FORCE_CHARGE, FORCE_DISCHARGE, FORCE_INVERT = 0, 1, 2, 3
AGGREGATIONS = ("mean", "min")


class SMError(RuntimeError):
    """Simulation failure; carries the offending scenario when known."""

    def __init__(self, message: str, scenario: Scenario | None = None):
        super().__init__(message)
        self.scenario = scenario


class UnsupportedHandler(SMError):
    pass


class SimulationModel(Protocol):
    name: str

    def evaluate(self, scenario: Scenario) -> KPIResult: ...

    def supported_handlers(self) -> frozenset[str] | None: ...


@dataclass
class SimState:
    """Per-step device modifiers; impacts write into time windows."""

    load_scale: np.ndarray  # (T, n_load)
    pv_on: np.ndarray  # (T, n_pv) bool
    pv_phase: np.ndarray  # (T, n_pv) int, -1 = as profiled
    pv_active_frac: np.ndarray  # (T, n_pv)
    pv_q_frac: np.ndarray  # (T, n_pv) injected reactive power, fraction of rating
    batt_force: np.ndarray  # (T, n_batt) int
    batt_peak: np.ndarray  # (T, n_batt)
    batt_valley: np.ndarray  # (T, n_batt)
    batt_limit: np.ndarray  # (T, n_batt) fraction of rated power
    cap_frac: np.ndarray  # (T, n_cap)
    switch_ops: np.ndarray  # (T, n_pairs) bool

    @classmethod
    def initial(cls, model: FeederModel, horizon: int, initial_op: Mapping[str, Any] | None = None) -> SimState:
        op = dict(initial_op or {})
        T = horizon
        nb, npv = len(model.batteries), len(model.pvs)
        s = cls(
            load_scale=np.ones((T, len(model.loads))),
            pv_on=np.ones((T, npv), dtype=bool),
            pv_phase=np.full((T, npv), -1, dtype=int),
            pv_active_frac=np.ones((T, npv)),
            pv_q_frac=np.zeros((T, npv)),
            batt_force=np.zeros((T, nb), dtype=int),
            batt_peak=np.full((T, nb), float(op.get("peak_threshold", model.peak_threshold))),
            batt_valley=np.full((T, nb), float(op.get("valley_threshold", model.valley_threshold))),
            batt_limit=np.ones((T, nb)),
            cap_frac=np.ones((T, len(model.capacitors))),
            switch_ops=np.zeros((T, len(model.switch_pairs)), dtype=bool),
        )
        ratings = op.get("capacitor_ratings") or {}
        for k, cap in enumerate(model.capacitors):
            if cap.name in ratings:
                s.cap_frac[:, k] = float(ratings[cap.name]) / cap.q_rated if cap.q_rated else 0.0
        operated = set(op.get("switches_operated") or ())
        for k, sp in enumerate(model.switch_pairs):
            if sp.name in operated:
                s.switch_ops[:, k] = True
        return s


def _window(ev: ImpactEvent, horizon: int, step_seconds: float) -> slice:
    start = int(math.floor(ev.schedule_time / step_seconds + 1e-9))
    duration = ev.parameters.get("duration")
    if duration is None:
        return slice(start, horizon)
    stop = int(math.ceil((ev.schedule_time + float(duration)) / step_seconds - 1e-9))
    return slice(start, min(max(stop, start), horizon))


def apply_impact(model: FeederModel, state: SimState, event: ImpactEvent, step_seconds: float) -> SimState:
    """Write one impact's effect into ``state`` (in place) and return it."""
    handler = event.handler
    if handler in REGULATOR_HANDLERS:
        raise UnsupportedHandler(f"impact handler {handler!r} (regulator) is not supported by the bundled simulator")
    if handler not in HANDLER_KIND:
        raise UnsupportedHandler(f"unknown impact handler {handler!r}")
    kind = HANDLER_KIND[handler]
    elements = model.elements()
    if event.target not in elements:
        raise SMError(f"impact {event.action_id!r}: target {event.target!r} is not a simulator element")
    if elements[event.target] != kind:
        raise SMError(
            f"impact {event.action_id!r}: handler {handler!r} needs a {kind} target, "
            f"got {elements[event.target]} {event.target!r}"
        )
    T = state.load_scale.shape[0]
    w = _window(event, T, step_seconds)
    p = event.parameters

    def index(items):
        return next(i for i, it in enumerate(items) if it.name == event.target)

    if kind == "load":
        state.load_scale[w, index(model.loads)] *= float(p.get("factor", 1.0))
    elif kind == "pv":
        k = index(model.pvs)
        if handler == "pv_disconnect":
            state.pv_on[w, k] = False
        elif handler == "pv_unbalanced":
            state.pv_phase[w, k] = PHASES.index(p.get("phase", "a"))
        else:
            state.pv_q_frac[w, k] = float(p.get("q_fraction", 0.0))
            state.pv_active_frac[w, k] = float(p.get("active_fraction", 1.0))
    elif kind == "battery":
        k = index(model.batteries)
        if handler == "battery_max_charge":
            state.batt_force[w, k] = FORCE_CHARGE
        elif handler == "battery_max_discharge":
            state.batt_force[w, k] = FORCE_DISCHARGE
        elif handler == "battery_mode_override":
            state.batt_force[w, k] = FORCE_INVERT
        else:
            if "peak_threshold" in p:
                state.batt_peak[w, k] = float(p["peak_threshold"])
            if "valley_threshold" in p:
                state.batt_valley[w, k] = float(p["valley_threshold"])
            if "power_limit_fraction" in p:
                state.batt_limit[w, k] = float(p["power_limit_fraction"])
    elif kind == "capacitor":
        state.cap_frac[w, index(model.capacitors)] *= float(p.get("fraction", 0.0))
    elif kind == "switch":
        state.switch_ops[w, index(model.switch_pairs)] = True
    return state


@dataclass
class SimResult:
    """Full simulation output behind a :class:`KPIResult`."""

    kpi: KPIResult
    voltages: np.ndarray  # (T, n_bus, 3)
    p_ss: np.ndarray
    q_ss: np.ndarray
    battery_power: np.ndarray  # (T, n_batt), charging positive
    soc: np.ndarray  # (T + 1, n_batt)


class FeederSM:
    """Bundled simulator: battery control, linear voltage drops, VI/SPF/VISPF."""

    def __init__(
        self,
        model: FeederModel,
        inputs: OperatingInputs | None = None,
        spf_mode: str = "arctan",
        aggregation: str = "mean",
    ):
        if aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}")
        self.model = model
        self.inputs = inputs
        self.spf_mode = spf_mode
        self.aggregation = aggregation
        self.name = f"builtin:{model.name}"
        self._paths: dict[frozenset[str], tuple[np.ndarray, np.ndarray]] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_preset(cls, name: str, **kw) -> FeederSM:
        model, inputs = preset(name)
        return cls(model, inputs, **kw)

    def supported_handlers(self) -> frozenset[str]:
        return SUPPORTED_HANDLERS

    def base_scenario(self, horizon: int | None = None) -> Scenario:
        if self.inputs is None:
            raise SMError("no operating inputs bundled with this simulator")
        inputs = self.inputs
        if horizon is not None:
            inputs = OperatingInputs(
                {k: v[:horizon] for k, v in inputs.load_p.items()},
                {k: v[:horizon] for k, v in inputs.load_q.items()},
                {k: v[:horizon] for k, v in inputs.pv_p.items()},
                inputs.step_seconds,
            )
        return Scenario(inputs, model=self.model.name)

    def _path_matrices(self, operated: frozenset[str]):
        with self._lock:
            if operated not in self._paths:
                self._paths[operated] = self.model.path_matrices(operated)
            return self._paths[operated]

    def evaluate(self, scenario: Scenario) -> KPIResult:
        return self.simulate(scenario).kpi

    def simulate(self, scenario: Scenario) -> SimResult:
        model = self.model
        try:
            scenario.validate()
        except ValueError as exc:
            raise SMError(str(exc), scenario) from exc
        inputs = scenario.operating_inputs
        T = scenario.horizon
        dt_s = inputs.step_seconds
        for name in [ld.name for ld in model.loads]:
            if name not in inputs.load_p:
                raise SMError(f"no profile for load {name!r}", scenario)

        state = SimState.initial(model, T, scenario.initial_op)
        for ev in sorted(scenario.impact_schedule, key=lambda e: (e.schedule_time, e.action_id)):
            try:
                apply_impact(model, state, ev, dt_s)
            except SMError as exc:
                exc.scenario = scenario
                raise

        bidx = model.bus_index
        N = len(model.buses)
        P = np.zeros((T, N, 3))
        Q = np.zeros((T, N, 3))
        for k, ld in enumerate(model.loads):
            scale = state.load_scale[:, k : k + 1]
            P[:, bidx[ld.bus]] += inputs.load_p[ld.name] * scale
            Q[:, bidx[ld.bus]] += inputs.load_q[ld.name] * scale
        for k, pv in enumerate(model.pvs):
            avail = inputs.pv_p.get(pv.name)
            if avail is None:
                continue
            out = avail.copy()
            single = state.pv_phase[:, k] >= 0
            if single.any():
                tot = avail[single].sum(axis=1)
                out[single] = 0.0
                out[single, state.pv_phase[single, k]] = tot
            gain = state.pv_on[:, k] * state.pv_active_frac[:, k]
            P[:, bidx[pv.bus]] -= out * gain[:, None]
            q_inj = state.pv_q_frac[:, k] * state.pv_on[:, k] * pv.rating / 3.0
            Q[:, bidx[pv.bus]] -= q_inj[:, None]
        for k, cap in enumerate(model.capacitors):
            Q[:, bidx[cap.bus]] -= (cap.q_rated * state.cap_frac[:, k])[:, None]

        batt_p, soc = self._battery_dispatch(P.sum(axis=(1, 2)), state, scenario, dt_s)
        for k, b in enumerate(model.batteries):
            P[:, bidx[b.bus]] += (batt_p[:, k] / 3.0)[:, None]

        V = np.empty((T, N, 3))
        ops = state.switch_ops
        names = [sp.name for sp in model.switch_pairs]
        rows = np.unique(ops, axis=0) if ops.shape[1] else np.zeros((1, 0), dtype=bool)
        for row in rows:
            mask = (ops == row).all(axis=1) if ops.shape[1] else np.ones(T, dtype=bool)
            operated = frozenset(n for n, on in zip(names, row) if on)
            try:
                R, X = self._path_matrices(operated)
            except ValueError as exc:
                raise SMError(str(exc), scenario) from exc
            for ph in range(3):
                drop = P[mask, :, ph] @ R[ph].T + Q[mask, :, ph] @ X[ph].T
                V[mask, :, ph] = model.v0 - drop / model.v0

        p_ss = P.sum(axis=(1, 2))
        q_ss = Q.sum(axis=(1, 2))
        if np.any(V.mean(axis=-1) <= 0):
            raise SMError("voltage collapse in the linear model (non-positive bus voltage)", scenario)
        vi = compute_vi(V)
        spf, zero_p = compute_spf(p_ss, q_ss, self.spf_mode)
        vispf, clamped = compute_vispf(vi, spf)
        y = float(vispf.mean() if self.aggregation == "mean" else vispf.min())
        flags = {
            "spf_mode": self.spf_mode,
            "aggregation": self.aggregation,
            "spf_zero_p_steps": int(np.count_nonzero(zero_p)),
            "vispf_clamped_steps": int(np.count_nonzero(clamped)),
        }
        kpi = KPIResult(vi, spf, vispf, y, flags)
        return SimResult(kpi, V, p_ss, q_ss, batt_p, soc)

    def _battery_dispatch(self, p_no_batt: np.ndarray, state: SimState, scenario: Scenario, dt_s: float):
        """Peak-shaving / valley-filling on substation active power.

        Each battery takes its rating share of the required correction; forced
        modes replace the command. State of charge bounds the power.
        """
        model = self.model
        T = len(p_no_batt)
        nb = len(model.batteries)
        power = np.zeros((T, nb))
        soc = np.zeros((T + 1, nb))
        if nb == 0:
            return power, soc
        rated = np.array([b.rated_power for b in model.batteries])
        cap = np.array([b.capacity for b in model.batteries])
        soc_init = scenario.initial_op.get("soc") or {}
        soc[0] = [float(soc_init.get(b.name, b.soc0)) for b in model.batteries]
        share = rated / rated.sum()
        dt_h = dt_s / 3600.0
        for t in range(T):
            p = p_no_batt[t]
            peak, valley = state.batt_peak[t], state.batt_valley[t]
            need = np.where(p > peak, -(p - peak), np.where(p < valley, valley - p, 0.0)) * share
            lim = rated * state.batt_limit[t]
            cmd = np.clip(need, -lim, lim)
            force = state.batt_force[t]
            cmd = np.where(force == FORCE_CHARGE, rated, cmd)
            cmd = np.where(force == FORCE_DISCHARGE, -rated, cmd)
            cmd = np.where(force == FORCE_INVERT, -cmd, cmd)
            cmd = np.minimum(cmd, (cap - soc[t]) / dt_h)
            cmd = np.maximum(cmd, -soc[t] / dt_h)
            power[t] = cmd
            soc[t + 1] = np.clip(soc[t] + cmd * dt_h, 0.0, cap)
        return power, soc


class SubprocessSM:
    """External simulator behind a process boundary.

    The command receives the scenario as JSON on stdin and must print a
    KPIResult JSON document on stdout; a nonzero exit is an evaluation error.
    ``<command> --handlers`` may print the supported handler list.
    """

    def __init__(self, command: str | list[str], timeout: float | None = None):
        self.argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout
        self.name = "cmd:" + " ".join(self.argv)
        self._handlers: frozenset[str] | None | bool = False

    def supported_handlers(self) -> frozenset[str] | None:
        if self._handlers is False:
            try:
                proc = subprocess.run(
                    self.argv + ["--handlers"], capture_output=True, text=True, timeout=self.timeout
                )
                self._handlers = frozenset(json.loads(proc.stdout)) if proc.returncode == 0 else None
            except (OSError, ValueError, subprocess.TimeoutExpired):
                self._handlers = None
        return self._handlers  # type: ignore[return-value]

    def evaluate(self, scenario: Scenario) -> KPIResult:
        payload = json.dumps(scenario.to_dict())
        try:
            proc = subprocess.run(
                self.argv, input=payload, capture_output=True, text=True, timeout=self.timeout
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise SMError(f"{self.name}: {exc}", scenario) from exc
        if proc.returncode != 0:
            raise SMError(f"{self.name} exited {proc.returncode}: {proc.stderr.strip()}", scenario)
        try:
            return KPIResult.from_dict(json.loads(proc.stdout))
        except (ValueError, KeyError) as exc:
            raise SMError(f"{self.name}: malformed KPI result ({exc})", scenario) from exc


class CachedSM:
    """Memoizes KPI results by impact set; valid for one fixed base scenario."""

    def __init__(self, sm: SimulationModel):
        self.sm = sm
        self.name = sm.name
        self._cache: dict[tuple, KPIResult] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def supported_handlers(self):
        return self.sm.supported_handlers()

    def evaluate(self, scenario: Scenario) -> KPIResult:
        key = scenario.impact_key()
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None:
                self.hits += 1
                return hit
        result = self.sm.evaluate(scenario)
        with self._lock:
            self._cache.setdefault(key, result)
            self.misses += 1
        return result
