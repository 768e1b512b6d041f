"""Cyber-state engine: state vector, transition function and action queries."""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import IO, Any

from .ci import CI, ActionSpec, Category


class DeviceState(str, Enum):
    NOT_VISIBLE = "not_visible"
    VISIBLE = "visible"
    ACCESSIBLE = "accessible"
    COMPROMISED = "compromised"


class LinkState(str, Enum):
    NOT_ACCESSIBLE = "not_accessible"
    ACCESSIBLE = "accessible"


class ActionState(str, Enum):
    NOT_ACCESSIBLE = "not_accessible"
    ACCESSIBLE = "accessible"
    ACTIVE = "active"
    INVALID = "invalid"


DEVICE_ORDER = {s: i for i, s in enumerate(DeviceState)}
LINK_ORDER = {s: i for i, s in enumerate(LinkState)}

LINK_UNLOCK_MODES = ("xi", "zeta_action_targets")


class TransitionError(ValueError):
    pass


class ReplayError(TransitionError):
    def __init__(self, index: int, action_id: str, cause: str):
        super().__init__(f"step {index} ({action_id}): {cause}")
        self.index = index
        self.action_id = action_id
        self.cause = cause


@dataclass(frozen=True, eq=False)
class CyberState:
    devices: Mapping[str, DeviceState]
    links: Mapping[str, LinkState]
    actions: Mapping[str, ActionState]
    accessible: frozenset[str]
    spent_budget: float = 0.0
    action_log: tuple[str, ...] = ()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CyberState):
            return NotImplemented
        return (
            dict(self.devices) == dict(other.devices)
            and dict(self.links) == dict(other.links)
            and dict(self.actions) == dict(other.actions)
            and self.spent_budget == other.spent_budget
            and self.action_log == other.action_log
        )

    def __hash__(self) -> int:
        return hash(self.action_log)

    def to_dict(self) -> dict[str, Any]:
        return {
            "devices": {k: v.value for k, v in sorted(self.devices.items())},
            "links": {k: v.value for k, v in sorted(self.links.items())},
            "actions": {k: v.value for k, v in sorted(self.actions.items())},
            "spent_budget": self.spent_budget,
            "action_log": list(self.action_log),
        }


@dataclass
class _Index:
    access_of_device: dict[str, list[str]] = field(default_factory=dict)
    exploit_of_device: dict[str, list[str]] = field(default_factory=dict)
    actions_of_link: dict[str, list[str]] = field(default_factory=dict)
    # per exploit action: links it makes accessible at its owning endpoint
    unlock_links: dict[str, list[str]] = field(default_factory=dict)


class CyberEngine:
    """Applies the device/link/action transition tables to a :class:`CI`.

    ``link_unlock_via`` selects how an exploit makes an adjacent link
    accessible: ``"xi"`` (default) when it reveals the other endpoint,
    ``"zeta_action_targets"`` when one of the impacts it unlocks is owned by
    an endpoint of the link.
    """

    def __init__(self, ci: CI, link_unlock_via: str = "xi"):
        if link_unlock_via not in LINK_UNLOCK_MODES:
            raise ValueError(f"link_unlock_via must be one of {LINK_UNLOCK_MODES}")
        self.ci = ci
        self.link_unlock_via = link_unlock_via
        self.cost = {aid: a.cost for aid, a in ci.actions.items()}
        idx = _Index()
        for d in ci.devices:
            idx.access_of_device[d.id] = [a.id for a in d.actions if a.category is Category.ACCESS]
            idx.exploit_of_device[d.id] = [a.id for a in d.actions if a.category is Category.EXPLOIT]
        for link in ci.links:
            idx.actions_of_link[link.id] = [a.id for a in link.actions]
        for aid, a in ci.actions.items():
            kind, owner = ci.owner[aid]
            if kind != "device" or a.category is not Category.EXPLOIT:
                continue
            targets = self._unlock_targets(a)
            idx.unlock_links[aid] = [
                lid
                for lid in ci.links_of_device.get(owner, [])
                if targets & set(ci.link_by_id[lid].endpoints)
            ]
        self._idx = idx

    def _unlock_targets(self, a: ActionSpec) -> set[str]:
        if self.link_unlock_via == "xi":
            return set(a.revealed_devices or ())
        out: set[str] = set()
        for z in a.unlocked_impacts or ():
            if z not in self.ci.owner:
                continue
            kind, owner = self.ci.owner[z]
            if kind == "device":
                out.add(owner)
            else:
                out.update(self.ci.link_by_id[owner].endpoints)
        return out

    # ------------------------------------------------------------------

    def init_states(self, overrides: Mapping[str, str | Enum] | None = None) -> CyberState:
        """Standard initial conditions, optionally overridden per entity.

        Overrides only set values; they never fire transitions.
        """
        ci = self.ci
        devices = {d.id: DeviceState.NOT_VISIBLE for d in ci.devices}
        links = {l.id: LinkState.NOT_ACCESSIBLE for l in ci.links}
        actions = {
            aid: ActionState.ACCESSIBLE
            if a.category is Category.ACCESS and a.entry_point
            else ActionState.NOT_ACCESSIBLE
            for aid, a in ci.actions.items()
        }
        for ent, value in (overrides or {}).items():
            value = value.value if isinstance(value, Enum) else value
            if ent in devices:
                devices[ent] = DeviceState(value)
            elif ent in links:
                links[ent] = LinkState(value)
            elif ent in actions:
                actions[ent] = ActionState(value)
            else:
                raise TransitionError(f"initial-condition override names unknown entity {ent!r}")
        accessible = frozenset(a for a, s in actions.items() if s is ActionState.ACCESSIBLE)
        return CyberState(
            MappingProxyType(devices), MappingProxyType(links), MappingProxyType(actions), accessible
        )

    def step(self, state: CyberState, action_id: str) -> CyberState:
        ci = self.ci
        if action_id not in ci.actions:
            raise TransitionError(f"unknown action {action_id!r}")
        if state.actions[action_id] is not ActionState.ACCESSIBLE:
            raise TransitionError(
                f"action {action_id!r} is {state.actions[action_id].value}, not accessible"
            )
        a = ci.actions[action_id]
        kind, owner = ci.owner[action_id]
        idx = self._idx

        dev_changes: dict[str, DeviceState] = {}
        link_changes: dict[str, LinkState] = {}
        devices, links = state.devices, state.links

        # (1) devices
        if kind == "device" and a.category is Category.EXPLOIT:
            for d in a.revealed_devices or ():
                if d != owner and devices[d] is DeviceState.NOT_VISIBLE:
                    dev_changes[d] = DeviceState.VISIBLE
        if kind == "link" and a.category is Category.ACCESS:
            for d in ci.link_by_id[owner].endpoints:
                if devices[d] is DeviceState.NOT_VISIBLE:
                    dev_changes[d] = DeviceState.VISIBLE
        if kind == "device" and a.category is Category.ACCESS:
            # an entry-point access reaches a device that was never revealed
            if devices[owner] in (DeviceState.VISIBLE, DeviceState.NOT_VISIBLE):
                dev_changes[owner] = DeviceState.ACCESSIBLE
        if kind == "device" and a.category is Category.EXPLOIT:
            if devices[owner] is DeviceState.ACCESSIBLE:
                dev_changes[owner] = DeviceState.COMPROMISED

        # (2) links
        if kind == "device" and a.category is Category.EXPLOIT:
            for lid in idx.unlock_links.get(action_id, ()):
                if links[lid] is LinkState.NOT_ACCESSIBLE:
                    link_changes[lid] = LinkState.ACCESSIBLE
        if kind == "link" and a.category is Category.ACCESS:
            if links[owner] is LinkState.NOT_ACCESSIBLE:
                link_changes[owner] = LinkState.ACCESSIBLE

        # (3) actions, keyed on the successor device/link states
        actions = state.actions
        act_changes: dict[str, ActionState] = {action_id: ActionState.ACTIVE}

        def open_(aid: str) -> None:
            if aid not in act_changes and actions[aid] is ActionState.NOT_ACCESSIBLE:
                act_changes[aid] = ActionState.ACCESSIBLE

        for d, new in dev_changes.items():
            if new is DeviceState.VISIBLE:
                for aid in idx.access_of_device[d]:
                    open_(aid)
            elif new is DeviceState.ACCESSIBLE:
                for aid in idx.exploit_of_device[d]:
                    open_(aid)
                for aid in idx.access_of_device[d]:
                    if aid not in act_changes and actions[aid] is ActionState.ACCESSIBLE:
                        act_changes[aid] = ActionState.INVALID
        for lid, new in link_changes.items():
            for aid in idx.actions_of_link[lid]:
                open_(aid)
        if a.category is Category.EXPLOIT:
            for z in sorted(a.unlocked_impacts or ()):
                open_(z)

        new_devices = dict(devices)
        new_devices.update(dev_changes)
        new_links = dict(links)
        new_links.update(link_changes)
        new_actions = dict(actions)
        new_actions.update(act_changes)
        accessible = set(state.accessible)
        for aid, s in act_changes.items():
            if s is ActionState.ACCESSIBLE:
                accessible.add(aid)
            else:
                accessible.discard(aid)
        log = state.action_log + (action_id,)
        return CyberState(
            MappingProxyType(new_devices),
            MappingProxyType(new_links),
            MappingProxyType(new_actions),
            frozenset(accessible),
            math.fsum(self.cost[x] for x in log),
            log,
        )

    def accessible_actions(self, state: CyberState) -> list[str]:
        return sorted(state.accessible)

    def fits(self, state: CyberState, action_id: str, budget: float) -> bool:
        """Budget check on the correctly rounded total of the log plus ``action_id``."""
        total = state.spent_budget + self.cost[action_id]
        if abs(total - budget) > 1e-9 * max(1.0, abs(budget)):
            return total <= budget
        # near the boundary: recompute the sum in one exact pass
        return math.fsum([*(self.cost[x] for x in state.action_log), self.cost[action_id]]) <= budget

    def affordable_actions(self, state: CyberState, budget: float) -> list[str]:
        """Accessible actions whose cost still fits in the remaining budget."""
        return sorted(a for a in state.accessible if self.fits(state, a, budget))

    def is_terminal(self, state: CyberState, budget: float) -> bool:
        return not any(self.fits(state, a, budget) for a in state.accessible)

    def replay(
        self,
        actions: Sequence[str],
        initial: CyberState | None = None,
        budget: float | None = None,
    ) -> list[CyberState]:
        """Apply ``actions`` in order and return the state after each step."""
        state = self.init_states() if initial is None else initial
        out: list[CyberState] = []
        for i, aid in enumerate(actions):
            if aid not in self.ci.actions:
                raise ReplayError(i, aid, "unknown action")
            if state.actions[aid] is not ActionState.ACCESSIBLE:
                raise ReplayError(i, aid, f"action is {state.actions[aid].value}, not accessible")
            if budget is not None and not self.fits(state, aid, budget):
                raise ReplayError(i, aid, f"budget {budget} exceeded")
            state = self.step(state, aid)
            out.append(state)
        return out

    def impact_actions(self, state: CyberState) -> list[ActionSpec]:
        return [
            self.ci.actions[a] for a in state.action_log if self.ci.actions[a].category is Category.IMPACT
        ]


def state_delta(before: CyberState, after: CyberState) -> dict[str, dict[str, list[str]]]:
    """Entity-state changes between two snapshots, as ``{kind: {id: [old, new]}}``."""
    out: dict[str, dict[str, list[str]]] = {"devices": {}, "links": {}, "actions": {}}
    for kind in out:
        old, new = getattr(before, kind), getattr(after, kind)
        for k, v in new.items():
            if old[k] is not v:
                out[kind][k] = [old[k].value, v.value]
    return out


def trace_records(
    engine: CyberEngine, initial: CyberState, states: Iterable[CyberState]
) -> list[dict[str, Any]]:
    """One record per step: action, category, cost, cumulative budget and delta."""
    records = []
    prev = initial
    for i, st in enumerate(states):
        aid = st.action_log[-1]
        a = engine.ci.actions[aid]
        records.append(
            {
                "step": i + 1,
                "action": aid,
                "category": a.category.value,
                "entry_point": bool(a.entry_point),
                "cost": a.cost,
                "cumulative_cost": st.spent_budget,
                "delta": state_delta(prev, st),
            }
        )
        prev = st
    return records


def write_trace(records: Iterable[Mapping[str, Any]], fh: IO[str]) -> None:
    for rec in records:
        fh.write(json.dumps(rec, sort_keys=True) + "\n")
