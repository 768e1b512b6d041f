"""Cybersecurity information layer: devices, network links, logical links and actions.

The on-disk form is a NetJSON ``NetworkGraph`` document extended with an
``x_asm`` namespace. Nodes are devices, links are network links; both carry
their adversary actions under ``properties.actions``.
"""

from __future__ import annotations

import copy
import hashlib
import json
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import networkx as nx

SCHEMA_VERSION = "1.0"
EXT = "x_asm"


class Category(str, Enum):
    ACCESS = "access"
    EXPLOIT = "exploit"
    IMPACT = "impact"


class CIError(ValueError):
    """Raised when CI documents cannot be turned into a well-formed CI."""

    def __init__(self, message: str, violations: Sequence[Violation] = ()):
        super().__init__(message)
        self.violations = list(violations)


class LogicalLinkError(ValueError):
    pass


@dataclass(frozen=True)
class ActionSpec:
    """One adversary action.

    Category-specific fields are ``None`` when they do not apply, so that a
    mismatch between category and populated fields can be detected.
    """

    id: str
    action_type: str
    category: Category
    cost: float
    entry_point: bool | None = None
    unlocked_impacts: frozenset[str] | None = None
    revealed_devices: frozenset[str] | None = None
    impact_handler: str | None = None
    parameters: Mapping[str, Any] | None = None
    logical_link: tuple[str, str] | None = None
    schedule_time: float | None = None
    extra: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def populated(self) -> set[str]:
        names = (
            "entry_point",
            "unlocked_impacts",
            "revealed_devices",
            "impact_handler",
            "parameters",
            "logical_link",
            "schedule_time",
        )
        return {n for n in names if getattr(self, n) is not None}


@dataclass(frozen=True)
class DeviceSpec:
    id: str
    device_type: str
    actions: tuple[ActionSpec, ...] = ()
    sm_element: str | None = None
    extra: Mapping[str, Any] = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class NetworkLinkSpec:
    id: str
    endpoints: tuple[str, str]
    logical_links: tuple[tuple[str, str], ...] = ()
    actions: tuple[ActionSpec, ...] = ()
    extra: Mapping[str, Any] = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class Violation:
    severity: str
    code: str
    entity: str
    message: str
    document: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "severity": self.severity,
            "code": self.code,
            "entity": self.entity,
            "message": self.message,
            "document": self.document,
        }

    def __str__(self) -> str:
        where = f"{self.document}: " if self.document else ""
        return f"{where}[{self.severity}] {self.code} ({self.entity}): {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.violations)

    def __len__(self) -> int:
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)

    @property
    def errors(self) -> list[Violation]:
        return [v for v in self.violations if v.severity == "error"]

    def codes(self) -> set[str]:
        return {v.code for v in self.violations}

    def to_list(self) -> list[dict[str, Any]]:
        return [v.to_dict() for v in self.violations]


class CI:
    """Immutable cross-referenced view of devices, links and their actions."""

    def __init__(
        self,
        devices: Iterable[DeviceSpec],
        links: Iterable[NetworkLinkSpec] = (),
        type_registry: Iterable[str] | None = None,
        meta: Mapping[str, Any] | None = None,
        source: str | None = None,
    ):
        self.devices: tuple[DeviceSpec, ...] = tuple(devices)
        self.links: tuple[NetworkLinkSpec, ...] = tuple(links)
        if type_registry is None:
            type_registry = {d.device_type for d in self.devices}
        self.type_registry: frozenset[str] = frozenset(type_registry)
        self.meta: dict[str, Any] = dict(meta or {})
        self.source = source

        self.device_by_id: dict[str, DeviceSpec] = {}
        for d in self.devices:
            self.device_by_id.setdefault(d.id, d)
        self.link_by_id: dict[str, NetworkLinkSpec] = {}
        for link in self.links:
            self.link_by_id.setdefault(link.id, link)

        self.actions: dict[str, ActionSpec] = {}
        # action id -> ("device" | "link", owner id)
        self.owner: dict[str, tuple[str, str]] = {}
        for d in self.devices:
            for a in d.actions:
                self.actions.setdefault(a.id, a)
                self.owner.setdefault(a.id, ("device", d.id))
        for link in self.links:
            for a in link.actions:
                self.actions.setdefault(a.id, a)
                self.owner.setdefault(a.id, ("link", link.id))

        self.links_of_device: dict[str, list[str]] = {d.id: [] for d in self.devices}
        for link in self.links:
            for end in set(link.endpoints):
                if end in self.links_of_device:
                    self.links_of_device[end].append(link.id)

    @property
    def n_actions(self) -> int:
        """Total action count M (devices plus links)."""
        return sum(len(d.actions) for d in self.devices) + sum(len(l.actions) for l in self.links)

    def entry_points(self) -> list[str]:
        return sorted(
            a.id for a in self.actions.values() if a.category is Category.ACCESS and a.entry_point
        )

    def impact_handlers(self) -> set[str]:
        return {
            a.impact_handler
            for a in self.actions.values()
            if a.category is Category.IMPACT and a.impact_handler
        }

    def fingerprint(self) -> str:
        payload = json.dumps(to_document(self, include_meta=False), sort_keys=True, separators=(",", ":"))
        return "sha256:" + hashlib.sha256(payload.encode()).hexdigest()

    def scaled(self, factor: float) -> CI:
        """Copy with every action cost multiplied by ``factor``."""
        if factor <= 0:
            raise ValueError("cost scale factor must be positive")

        def sc(actions):
            return tuple(_replace(a, cost=a.cost * factor) for a in actions)

        return CI(
            [DeviceSpec(d.id, d.device_type, sc(d.actions), d.sm_element, d.extra) for d in self.devices],
            [NetworkLinkSpec(l.id, l.endpoints, l.logical_links, sc(l.actions), l.extra) for l in self.links],
            self.type_registry,
            self.meta,
            self.source,
        )

    def with_costs(self, costs: Mapping[str, float]) -> CI:
        def upd(actions):
            return tuple(_replace(a, cost=float(costs[a.id])) if a.id in costs else a for a in actions)

        return CI(
            [DeviceSpec(d.id, d.device_type, upd(d.actions), d.sm_element, d.extra) for d in self.devices],
            [NetworkLinkSpec(l.id, l.endpoints, l.logical_links, upd(l.actions), l.extra) for l in self.links],
            self.type_registry,
            self.meta,
            self.source,
        )

    def __repr__(self) -> str:
        return f"CI(devices={len(self.devices)}, links={len(self.links)}, actions={self.n_actions})"


def _replace(action: ActionSpec, **changes) -> ActionSpec:
    from dataclasses import replace

    return replace(action, **changes)


# ---------------------------------------------------------------------------
# validation


def validate_ci(ci: CI) -> ValidationReport:
    """Collect every invariant violation; never raises."""
    out: list[Violation] = []
    src = ci.source

    def err(code, entity, msg, severity="error"):
        out.append(Violation(severity, code, entity, msg, src))

    seen: set[str] = set()
    for d in ci.devices:
        if d.id in seen:
            err("duplicate_id", d.id, "device id declared more than once")
        seen.add(d.id)
        if d.device_type not in ci.type_registry:
            err("unknown_device_type", d.id, f"type {d.device_type!r} not in the type registry")
    link_ids: set[str] = set()
    for link in ci.links:
        if link.id in link_ids:
            err("duplicate_id", link.id, "link id declared more than once")
        link_ids.add(link.id)
        for end in link.endpoints:
            if end not in ci.device_by_id:
                err("dangling_reference", link.id, f"endpoint {end!r} is not a declared device")
        for ll in link.logical_links:
            for end in ll:
                if end not in ci.device_by_id:
                    err("dangling_reference", link.id, f"logical link {list(ll)} names unknown device {end!r}")

    action_ids: set[str] = set()
    for kind, entities in (("device", ci.devices), ("link", ci.links)):
        for ent in entities:
            for a in ent.actions:
                if a.id in action_ids:
                    err("duplicate_id", a.id, "action id declared more than once")
                action_ids.add(a.id)
                _check_action(ci, kind, ent, a, err)

    if not ci.entry_points():
        err("no_entry_point", "<ci>", "no access action with entry_point = true; no attack can begin", "warning")
    return ValidationReport(out)


_EXPECTED_FIELDS = {
    ("device", Category.ACCESS): {"entry_point"},
    ("device", Category.EXPLOIT): {"unlocked_impacts", "revealed_devices"},
    ("device", Category.IMPACT): {"impact_handler", "parameters", "schedule_time"},
    ("link", Category.ACCESS): {"entry_point"},
    ("link", Category.IMPACT): {"impact_handler", "parameters", "schedule_time", "logical_link"},
}


def _check_action(ci: CI, kind: str, ent, a: ActionSpec, err) -> None:
    if not isinstance(a.category, Category):
        err("bad_category", a.id, f"category {a.category!r} is not access/exploit/impact")
        return
    if not (a.cost >= 0):
        err("negative_cost", a.id, f"cost {a.cost} must be a nonnegative real")
    expected = _EXPECTED_FIELDS.get((kind, a.category))
    if expected is None:
        err("bad_category", a.id, f"category {a.category.value} not allowed on a network link (access/impact only)")
        return
    populated = a.populated()
    extra = populated - expected
    if extra:
        err("field_mismatch", a.id, f"fields {sorted(extra)} do not apply to a {kind} {a.category.value} action")
    if a.category is Category.IMPACT and not a.impact_handler:
        err("field_mismatch", a.id, "impact action without an impact_handler")
    if a.category is Category.IMPACT and a.schedule_time is not None and a.schedule_time < 0:
        err("field_mismatch", a.id, "schedule_time must be >= 0")
    if kind == "link" and a.category is Category.ACCESS and a.entry_point is not True:
        err("link_access_not_entry", a.id, "access actions on network links must be entry points")
    if kind == "link" and a.category is Category.IMPACT:
        if a.logical_link is None:
            err("field_mismatch", a.id, "link impact action without a logical_link")
        elif tuple(a.logical_link) not in set(ent.logical_links):
            err(
                "logical_link_not_on_link",
                a.id,
                f"logical link {list(a.logical_link)} is not carried by link {ent.id}",
            )
    if a.category is Category.EXPLOIT:
        for z in sorted(a.unlocked_impacts or ()):
            target = ci.actions.get(z)
            if target is None:
                err("dangling_reference", a.id, f"unlocked impact {z!r} is not a declared action")
            elif target.category is not Category.IMPACT:
                err("dangling_reference", a.id, f"unlocked action {z!r} is not an impact action")
        for dev in sorted(a.revealed_devices or ()):
            if dev not in ci.device_by_id:
                err("dangling_reference", a.id, f"revealed device {dev!r} is not declared")


# ---------------------------------------------------------------------------
# documents


def read_document(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    try:
        with path.open() as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise CIError(f"{path}: malformed JSON ({exc})") from exc


def write_document(doc: Mapping[str, Any], path: str | Path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")


def _parse_action(raw: Any, where: str, owner: str) -> ActionSpec:
    if not isinstance(raw, Mapping):
        raise CIError(f"{where}: action on {owner} is not an object")
    aid = raw.get("id")
    if not isinstance(aid, str) or not aid:
        raise CIError(f"{where}: action on {owner} has no string id")
    try:
        category = Category(raw.get("category"))
    except ValueError:
        raise CIError(f"{where}: action {aid}: unknown category {raw.get('category')!r}") from None
    cost = raw.get("cost")
    if cost is None:
        raise CIError(f"{where}: action {aid}: missing cost")
    if isinstance(cost, bool) or not isinstance(cost, (int, float)):
        raise CIError(f"{where}: action {aid}: cost must be a number")
    ll = raw.get("logical_link")
    if ll is not None:
        if not (isinstance(ll, Sequence) and len(ll) == 2 and all(isinstance(x, str) for x in ll)):
            raise CIError(f"{where}: action {aid}: logical_link must be a [source, sink] pair")
        ll = (ll[0], ll[1])

    def opt_set(key):
        v = raw.get(key)
        return None if v is None else frozenset(v)

    entry = raw.get("entry_point")
    params = raw.get("parameters")
    sched = raw.get("schedule_time")
    if category is Category.ACCESS and entry is None:
        entry = False
    if category is Category.IMPACT:
        params = {} if params is None else params
        sched = 0.0 if sched is None else sched
    unlocked, revealed = opt_set("unlocked_impacts"), opt_set("revealed_devices")
    if category is Category.EXPLOIT:
        unlocked = unlocked or frozenset()
        revealed = revealed or frozenset()
    known = {
        "id", "type", "category", "cost", "entry_point", "unlocked_impacts", "revealed_devices",
        "impact_handler", "parameters", "logical_link", "schedule_time",
    }
    return ActionSpec(
        id=aid,
        action_type=str(raw.get("type", category.value)),
        category=category,
        cost=float(cost),
        entry_point=None if entry is None else bool(entry),
        unlocked_impacts=unlocked,
        revealed_devices=revealed,
        impact_handler=raw.get("impact_handler"),
        parameters=None if params is None else dict(params),
        logical_link=ll,
        schedule_time=None if sched is None else float(sched),
        extra={k: v for k, v in raw.items() if k not in known},
    )


def _link_id(raw: Mapping[str, Any]) -> str:
    props = raw.get("properties") or {}
    return raw.get("id") or props.get("id") or f"{raw.get('source')}--{raw.get('target')}"


def _parse_topology(doc: Mapping[str, Any], where: str, extra_actions) -> CI:
    ext = doc.get(EXT)
    if not isinstance(ext, Mapping) or ext.get("x_asm_schema") != SCHEMA_VERSION:
        raise CIError(f"{where}: missing or unsupported {EXT}.x_asm_schema (expected {SCHEMA_VERSION!r})")
    nodes = doc.get("nodes")
    links = doc.get("links", [])
    if not isinstance(nodes, list) or not isinstance(links, list):
        raise CIError(f"{where}: 'nodes' and 'links' must be arrays")

    devices = []
    for i, node in enumerate(nodes):
        if not isinstance(node, Mapping) or not isinstance(node.get("id"), str):
            raise CIError(f"{where}: nodes[{i}] has no string id")
        props = node.get("properties") or {}
        dtype = node.get("type", props.get("type"))
        if not isinstance(dtype, str):
            raise CIError(f"{where}: device {node['id']}: missing type")
        raw_actions = list(props.get("actions", [])) + extra_actions.get(("device", node["id"]), [])
        actions = tuple(_parse_action(a, where, node["id"]) for a in raw_actions)
        devices.append(
            DeviceSpec(
                id=node["id"],
                device_type=dtype,
                actions=actions,
                sm_element=props.get("sm_element"),
                extra={k: v for k, v in node.items() if k not in ("id", "type", "properties")}
                | {"properties": {k: v for k, v in props.items() if k not in ("actions", "type", "sm_element")}},
            )
        )

    specs = []
    for i, raw in enumerate(links):
        if not isinstance(raw, Mapping) or not isinstance(raw.get("source"), str) or not isinstance(raw.get("target"), str):
            raise CIError(f"{where}: links[{i}] needs string source and target")
        props = raw.get("properties") or {}
        lid = _link_id(raw)
        raw_actions = list(props.get("actions", [])) + extra_actions.get(("link", lid), [])
        lls = []
        for ll in props.get("logical_links", []):
            if not (isinstance(ll, Sequence) and len(ll) == 2):
                raise CIError(f"{where}: link {lid}: logical links must be [source, sink] pairs")
            lls.append((ll[0], ll[1]))
        specs.append(
            NetworkLinkSpec(
                id=lid,
                endpoints=(raw["source"], raw["target"]),
                logical_links=tuple(lls),
                actions=tuple(_parse_action(a, where, lid) for a in raw_actions),
                extra={k: v for k, v in raw.items() if k not in ("id", "source", "target", "properties")}
                | {"properties": {k: v for k, v in props.items() if k not in ("actions", "logical_links", "id")}},
            )
        )

    meta = {k: v for k, v in doc.items() if k not in ("nodes", "links")}
    registry = ext.get("device_types")
    return CI(devices, specs, registry, meta=meta, source=where)


def load_ci(documents: Sequence[str | Path | Mapping[str, Any]] | str | Path | Mapping[str, Any]) -> CI:
    """Build a CI from a document set.

    Exactly one document must be a NetJSON ``NetworkGraph`` (the topology).
    Other documents may be action overlays (``x_asm.kind == "actions"``) or
    cost maps (``x_asm.kind == "costs"``). Raises :class:`CIError` naming the
    document and entity on any violation.
    """
    if isinstance(documents, (str, Path, Mapping)):
        documents = [documents]
    loaded: list[tuple[str, Mapping[str, Any]]] = []
    for i, d in enumerate(documents):
        if isinstance(d, Mapping):
            loaded.append((f"<document {i}>", d))
        else:
            loaded.append((str(d), read_document(d)))

    topo = [(w, d) for w, d in loaded if d.get("type") == "NetworkGraph"]
    if len(topo) != 1:
        raise CIError(f"expected exactly one NetworkGraph document, got {len(topo)}")
    extra_actions: dict[tuple[str, str], list] = {}
    cost_maps = []
    for where, d in loaded:
        if d.get("type") == "NetworkGraph":
            continue
        kind = (d.get(EXT) or {}).get("kind")
        if kind == "actions":
            for dev, acts in (d.get("devices") or {}).items():
                extra_actions.setdefault(("device", dev), []).extend(acts)
            for lid, acts in (d.get("links") or {}).items():
                extra_actions.setdefault(("link", lid), []).extend(acts)
        elif kind == "costs":
            cost_maps.append((where, d))
        else:
            raise CIError(f"{where}: unrecognised document (no NetworkGraph type or {EXT}.kind)")

    where, doc = topo[0]
    ci = _parse_topology(doc, where, extra_actions)
    for key in extra_actions:
        kind, ent = key
        known = ci.device_by_id if kind == "device" else ci.link_by_id
        if ent not in known:
            raise CIError(f"overlay references unknown {kind} {ent!r}")
    if cost_maps:
        from .calibration import merge_cost_maps

        ci = ci.with_costs(merge_cost_maps([d for _, d in cost_maps]))

    report = validate_ci(ci)
    if report:
        first = report.violations[0]
        raise CIError(
            f"{first.document or where}: {first.entity}: {first.message}"
            + (f" (+{len(report) - 1} more)" if len(report) > 1 else ""),
            report.violations,
        )
    return ci


def _action_to_raw(a: ActionSpec) -> dict[str, Any]:
    out: dict[str, Any] = {"id": a.id, "type": a.action_type, "category": a.category.value, "cost": a.cost}
    if a.entry_point is not None:
        out["entry_point"] = a.entry_point
    if a.unlocked_impacts is not None:
        out["unlocked_impacts"] = sorted(a.unlocked_impacts)
    if a.revealed_devices is not None:
        out["revealed_devices"] = sorted(a.revealed_devices)
    if a.impact_handler is not None:
        out["impact_handler"] = a.impact_handler
    if a.parameters is not None:
        out["parameters"] = dict(a.parameters)
    if a.logical_link is not None:
        out["logical_link"] = list(a.logical_link)
    if a.schedule_time is not None:
        out["schedule_time"] = a.schedule_time
    out.update(a.extra)
    return out


def to_document(ci: CI, include_meta: bool = True) -> dict[str, Any]:
    """Serialize back to a NetJSON document (unknown keys preserved)."""
    doc: dict[str, Any] = {}
    if include_meta:
        doc.update(copy.deepcopy(ci.meta))
    doc.setdefault("type", "NetworkGraph")
    ext = dict(doc.get(EXT) or {})
    ext["x_asm_schema"] = SCHEMA_VERSION
    ext["device_types"] = sorted(ci.type_registry)
    doc[EXT] = ext
    nodes = []
    for d in ci.devices:
        extra = dict(d.extra)
        props = dict(extra.pop("properties", {}))
        if d.sm_element is not None:
            props["sm_element"] = d.sm_element
        props["actions"] = [_action_to_raw(a) for a in d.actions]
        nodes.append({"id": d.id, "type": d.device_type, **extra, "properties": props})
    links = []
    for link in ci.links:
        extra = dict(link.extra)
        props = dict(extra.pop("properties", {}))
        props["logical_links"] = [list(ll) for ll in link.logical_links]
        props["actions"] = [_action_to_raw(a) for a in link.actions]
        links.append(
            {"id": link.id, "source": link.endpoints[0], "target": link.endpoints[1], **extra, "properties": props}
        )
    doc["nodes"] = nodes
    doc["links"] = links
    return doc


# ---------------------------------------------------------------------------
# logical links


def _graph_from_document(doc: Mapping[str, Any]) -> tuple[nx.Graph, dict[frozenset, list[int]]]:
    g = nx.Graph()
    for node in doc.get("nodes", []):
        g.add_node(node["id"])
    by_pair: dict[frozenset, list[int]] = {}
    for i, link in enumerate(doc.get("links", [])):
        g.add_edge(link["source"], link["target"])
        by_pair.setdefault(frozenset((link["source"], link["target"])), []).append(i)
    return g, by_pair


def shortest_path(g: nx.Graph, source: str, sink: str, strict: bool = False) -> list[str]:
    """Shortest hop path; ties go to the lexicographically smallest id sequence."""
    paths = list(nx.all_shortest_paths(g, source, sink))
    if strict and len(paths) > 1:
        raise LogicalLinkError(
            f"{len(paths)} equally short paths between {source!r} and {sink!r} (strict mode)"
        )
    return min(paths)


def derive_logical_links(
    document: Mapping[str, Any],
    sources: Iterable[str],
    sinks: Iterable[str],
    strict: bool = False,
) -> dict[str, Any]:
    """Fill ``properties.logical_links`` of every link from source→sink paths.

    Every reachable (source, sink) pair is routed over its shortest path and
    recorded on each link that path traverses. Returns a new document.
    """
    sources, sinks = sorted(set(sources)), sorted(set(sinks))
    if set(sources) & set(sinks):
        raise LogicalLinkError("sources and sinks must be disjoint")
    doc = copy.deepcopy(dict(document))
    g, by_pair = _graph_from_document(doc)
    for n in sources + sinks:
        if n not in g:
            raise LogicalLinkError(f"unknown device {n!r}")

    carried: dict[int, list[tuple[str, str]]] = {i: [] for i in range(len(doc.get("links", [])))}
    for sink in sinks:
        reached = False
        for src in sources:
            if not nx.has_path(g, src, sink):
                continue
            reached = True
            path = shortest_path(g, src, sink, strict)
            for u, v in zip(path, path[1:]):
                for idx in by_pair[frozenset((u, v))]:
                    carried[idx].append((src, sink))
        if not reached:
            raise LogicalLinkError(f"sink {sink!r} is unreachable from every source")

    for i, link in enumerate(doc.get("links", [])):
        props = link.setdefault("properties", {})
        props["logical_links"] = [list(p) for p in sorted(set(carried[i]))]
    return doc


def devices_of_type(document: Mapping[str, Any], types: Iterable[str]) -> list[str]:
    types = set(types)
    out = []
    for node in document.get("nodes", []):
        t = node.get("type", (node.get("properties") or {}).get("type"))
        if t in types:
            out.append(node["id"])
    return out
