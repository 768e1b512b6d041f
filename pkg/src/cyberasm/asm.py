"""Augmented simulation model: a CI and its engine bound to a simulator and a base scenario."""

from __future__ import annotations

import os
from collections.abc import Sequence
from pathlib import Path

from .ci import CI
from .engine import CyberEngine, CyberState
from .simulation.feeder import load_profiles
from .simulation.scenario import KPIResult, Scenario, impact_events
from .simulation.sm import CachedSM, FeederSM, SimulationModel, SubprocessSM, UnsupportedHandler

SM_ENV = "ASM_SM_CMD"


class AugmentedModel:
    def __init__(
        self,
        ci: CI,
        sm: SimulationModel,
        base_scenario: Scenario,
        link_unlock_via: str = "xi",
        cache: bool = True,
    ):
        self.ci = ci
        self.engine = CyberEngine(ci, link_unlock_via)
        self.sm = CachedSM(sm) if cache else sm
        self.base = base_scenario
        if self.base.initial_cy is None:
            self.base.initial_cy = ci.fingerprint()

    def check_handlers(self) -> None:
        supported = self.sm.supported_handlers()
        if supported is None:
            return
        missing = sorted(self.ci.impact_handlers() - set(supported))
        if missing:
            raise UnsupportedHandler(f"{self.sm.name} does not support impact handler(s): {', '.join(missing)}")

    def scenario(self, action_ids: Sequence[str]) -> Scenario:
        return self.base.with_impacts(impact_events(self.ci, action_ids))

    def evaluate(self, actions: Sequence[str] | CyberState) -> KPIResult:
        if isinstance(actions, CyberState):
            actions = actions.action_log
        return self.sm.evaluate(self.scenario(actions))

    def y(self, actions: Sequence[str] | CyberState) -> float:
        return self.evaluate(actions).y

    @property
    def stats(self) -> dict[str, int]:
        if isinstance(self.sm, CachedSM):
            return {"sm_evaluations": self.sm.misses, "sm_cache_hits": self.sm.hits}
        return {}


def make_sm(spec: str | None, ci: CI) -> tuple[SimulationModel, Scenario]:
    """Resolve ``builtin``, ``builtin:<preset>`` or ``cmd:<command>`` to an SM and base scenario.

    The feeder preset defaults to ``x_asm.simulation.feeder`` in the CI; an
    optional ``x_asm.simulation.profiles`` file replaces its profiles. With no
    spec, the ``ASM_SM_CMD`` environment variable selects an external command.
    """
    sim = dict((ci.meta.get("x_asm") or {}).get("simulation") or {})
    if spec is None:
        spec = f"cmd:{os.environ[SM_ENV]}" if os.environ.get(SM_ENV) else "builtin"
    preset_name = sim.get("feeder", "medium")
    if spec.startswith("builtin:"):
        preset_name = spec.split(":", 1)[1]
    builtin = FeederSM.from_preset(preset_name, spf_mode=sim.get("spf_mode", "arctan"),
                                   aggregation=sim.get("aggregation", "mean"))
    if sim.get("profiles"):
        path = Path(sim["profiles"])
        if not path.is_absolute() and ci.source and Path(ci.source).exists():
            path = Path(ci.source).parent / path
        builtin.inputs = load_profiles(path)
    base = builtin.base_scenario(sim.get("horizon"))
    if spec.startswith("builtin"):
        return builtin, base
    if spec.startswith("cmd:"):
        return SubprocessSM(spec[4:]), base
    raise ValueError(f"unknown simulator spec {spec!r} (use builtin, builtin:<preset> or cmd:<command>)")


def build_model(ci: CI, sm_spec: str | None = None, link_unlock_via: str | None = None) -> AugmentedModel:
    sm, base = make_sm(sm_spec, ci)
    mode = link_unlock_via or (ci.meta.get("x_asm") or {}).get("link_unlock_via", "xi")
    return AugmentedModel(ci, sm, base, mode)
