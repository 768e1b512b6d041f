"""Scenario and KPI result documents exchanged with a simulation model."""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..ci import CI, Category
from .feeder import OperatingInputs


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class ImpactEvent:
    action_id: str
    handler: str
    parameters: Mapping[str, Any] = field(default_factory=dict)
    target: str | None = None
    logical_link: tuple[str, str] | None = None
    schedule_time: float = 0.0

    def key(self) -> tuple[str, float]:
        return (self.action_id, self.schedule_time)

    def to_dict(self) -> dict[str, Any]:
        return {
            "action_id": self.action_id,
            "handler": self.handler,
            "parameters": dict(self.parameters),
            "target": self.target,
            "logical_link": None if self.logical_link is None else list(self.logical_link),
            "schedule_time": self.schedule_time,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ImpactEvent:
        ll = d.get("logical_link")
        return cls(
            d["action_id"],
            d["handler"],
            dict(d.get("parameters") or {}),
            d.get("target"),
            None if ll is None else (ll[0], ll[1]),
            float(d.get("schedule_time", 0.0)),
        )


@dataclass
class Scenario:
    operating_inputs: OperatingInputs
    impact_schedule: tuple[ImpactEvent, ...] = ()
    initial_op: dict[str, Any] = field(default_factory=dict)
    initial_cy: str | None = None
    horizon: int | None = None
    model: str | None = None

    def __post_init__(self):
        if self.horizon is None:
            self.horizon = self.operating_inputs.horizon

    def validate(self) -> None:
        T = self.horizon
        for name, arr in {
            **self.operating_inputs.load_p,
            **self.operating_inputs.load_q,
            **self.operating_inputs.pv_p,
        }.items():
            if arr.shape != (T, 3):
                raise ScenarioError(f"profile {name!r} has shape {arr.shape}, expected ({T}, 3)")
        end = T * self.operating_inputs.step_seconds
        for ev in self.impact_schedule:
            if not 0 <= ev.schedule_time < end:
                raise ScenarioError(
                    f"impact {ev.action_id!r} scheduled at {ev.schedule_time}s, outside the {end}s horizon"
                )

    def with_impacts(self, events: Sequence[ImpactEvent]) -> Scenario:
        return Scenario(
            self.operating_inputs, tuple(events), dict(self.initial_op), self.initial_cy, self.horizon, self.model
        )

    def impact_key(self) -> tuple[tuple[str, float], ...]:
        return tuple(sorted(ev.key() for ev in self.impact_schedule))

    def to_dict(self) -> dict[str, Any]:
        return {
            "model": self.model,
            "horizon": self.horizon,
            "initial_cy": self.initial_cy,
            "initial_op": self.initial_op,
            "impact_schedule": [ev.to_dict() for ev in self.impact_schedule],
            "operating_inputs": self.operating_inputs.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Scenario:
        return cls(
            OperatingInputs.from_dict(d["operating_inputs"]),
            tuple(ImpactEvent.from_dict(e) for e in d.get("impact_schedule", [])),
            dict(d.get("initial_op") or {}),
            d.get("initial_cy"),
            d.get("horizon"),
            d.get("model"),
        )


@dataclass
class KPIResult:
    vi_series: np.ndarray
    spf_series: np.ndarray
    vispf_series: np.ndarray
    y: float
    flags: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "y": self.y,
            "vi_series": np.asarray(self.vi_series).tolist(),
            "spf_series": np.asarray(self.spf_series).tolist(),
            "vispf_series": np.asarray(self.vispf_series).tolist(),
            "flags": self.flags,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> KPIResult:
        return cls(
            np.asarray(d["vi_series"], dtype=float),
            np.asarray(d["spf_series"], dtype=float),
            np.asarray(d["vispf_series"], dtype=float),
            float(d["y"]),
            dict(d.get("flags") or {}),
        )


def resolve_target(ci: CI, action_id: str) -> str | None:
    """Simulator element an impact acts on.

    Explicit ``parameters.target`` wins; otherwise the owning device's
    ``sm_element``; for link impacts, the first end of the logical link that
    maps to an element (the producing device for controller→center links).
    """
    a = ci.actions[action_id]
    if a.parameters and a.parameters.get("target"):
        return str(a.parameters["target"])
    kind, owner = ci.owner[action_id]
    if kind == "device":
        return ci.device_by_id[owner].sm_element
    for dev in a.logical_link or ():
        el = ci.device_by_id[dev].sm_element
        if el:
            return el
    return None


def impact_events(ci: CI, action_ids: Sequence[str]) -> list[ImpactEvent]:
    out = []
    for aid in action_ids:
        a = ci.actions[aid]
        if a.category is not Category.IMPACT:
            continue
        params = {k: v for k, v in (a.parameters or {}).items() if k != "target"}
        out.append(
            ImpactEvent(
                aid,
                a.impact_handler or "",
                params,
                resolve_target(ci, aid),
                a.logical_link,
                float(a.schedule_time or 0.0),
            )
        )
    return out
