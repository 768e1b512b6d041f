"""Builders for the bundled CI documents (``data/*.netjson``).

``feeder_small`` is a three-device toy; ``feeder_medium`` mirrors a feeder
automation network with 244 devices over the two-feeder simulator preset.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Any

from .ci import EXT, SCHEMA_VERSION, derive_logical_links
from .simulation.feeder import medium

DATA = "data"


def data_path(name: str) -> Path:
    return Path(str(resources.files("cyberasm").joinpath(DATA, name)))


def load_fixture(name: str) -> dict[str, Any]:
    return json.loads(data_path(name).read_text())


def _access(aid, cost, entry=False, type_="remote_access"):
    return {"id": aid, "type": type_, "category": "access", "cost": cost, "entry_point": entry}


def _exploit(aid, cost, unlocks=(), reveals=(), type_="exploit"):
    return {
        "id": aid,
        "type": type_,
        "category": "exploit",
        "cost": cost,
        "unlocked_impacts": sorted(unlocks),
        "revealed_devices": sorted(reveals),
    }


def _impact(aid, cost, handler, params=None, type_=None, logical_link=None):
    out = {
        "id": aid,
        "type": type_ or handler,
        "category": "impact",
        "cost": cost,
        "impact_handler": handler,
        "parameters": dict(params or {}),
        "schedule_time": 0,
    }
    if logical_link is not None:
        out["logical_link"] = list(logical_link)
    return out


def _header(label: str, types, feeder: str, budget: float) -> dict[str, Any]:
    return {
        "type": "NetworkGraph",
        "protocol": "static",
        "version": "0",
        "metric": None,
        "label": label,
        EXT: {
            "x_asm_schema": SCHEMA_VERSION,
            "device_types": sorted(types),
            "simulation": {"feeder": feeder},
            "budget": budget,
        },
    }


def build_small() -> dict[str, Any]:
    doc = _header("feeder_small", ["workstation", "load_controller", "pv_inverter"], "small", 12)
    doc["nodes"] = [
        {
            "id": "cc",
            "type": "workstation",
            "properties": {
                "actions": [
                    _access("cc.access", 2),
                    _exploit("cc.exploit", 4, unlocks=["pv.disconnect"], reveals=["pv"], type_="rogue_master"),
                ]
            },
        },
        {
            "id": "lc",
            "type": "load_controller",
            "properties": {
                "sm_element": "load:3",
                "actions": [
                    _access("lc.access.entry", 5, entry=True),
                    _exploit("lc.exploit", 3, unlocks=["lc.scale_050"], reveals=["cc"]),
                    _impact("lc.scale_050", 2, "load_scaling", {"factor": 0.5}),
                ],
            },
        },
        {
            "id": "pv",
            "type": "pv_inverter",
            "properties": {
                "sm_element": "pv:4",
                "actions": [
                    _access("pv.access", 2),
                    _impact("pv.disconnect", 3, "pv_disconnect"),
                ],
            },
        },
    ]
    doc["links"] = [
        {
            "id": "l_lc",
            "source": "lc",
            "target": "cc",
            "cost": 1.0,
            "properties": {
                "logical_links": [["lc", "cc"]],
                "actions": [
                    _access("l_lc.access.entry", 4, entry=True, type_="field_tap"),
                    _impact("l_lc.fdi.scale_150", 3, "load_scaling", {"factor": 1.5},
                            type_="false_data_injection", logical_link=("lc", "cc")),
                ],
            },
        },
        {
            "id": "l_pv",
            "source": "pv",
            "target": "cc",
            "cost": 1.0,
            "properties": {"logical_links": [["pv", "cc"]], "actions": []},
        },
    ]
    return doc


# device counts per type for the medium fixture
MEDIUM_INVENTORY = {
    "router": 47,
    "firewall": 2,
    "workstation": 5,
    "bess": 3,
    "capacitor_bank": 4,
    "switch_controller": 1,
    "load_controller": 91,
    "pv_inverter": 91,
}

# impact costs: built-in functionality vs. code injection
LOW, HIGH = 6, 14


def _field_impacts(dev: str, kind: str) -> list[dict[str, Any]]:
    if kind == "load_controller":
        return [
            _impact(f"{dev}.load_scaling_050", LOW, "load_scaling", {"factor": 0.5}),
            _impact(f"{dev}.load_scaling_200", HIGH, "load_scaling", {"factor": 2.0}),
        ]
    if kind == "pv_inverter":
        return [
            _impact(f"{dev}.disconnect", LOW, "pv_disconnect"),
            _impact(f"{dev}.unbalanced", HIGH, "pv_unbalanced", {"phase": "a"}),
            _impact(f"{dev}.volt_var_no_active", HIGH, "pv_volt_breakpoints",
                    {"q_fraction": -0.44, "active_fraction": 0.0}),
        ]
    if kind == "bess":
        return [
            _impact(f"{dev}.mode_override", LOW, "battery_mode_override"),
            _impact(f"{dev}.max_discharge", HIGH, "battery_max_discharge"),
            _impact(f"{dev}.max_charge", HIGH, "battery_max_charge"),
            _impact(f"{dev}.settings", LOW, "battery_settings", {"power_limit_fraction": 0.1}),
        ]
    if kind == "capacitor_bank":
        return [_impact(f"{dev}.curtailment", LOW, "capacitor_curtailment", {"fraction": 0.0})]
    if kind == "switch_controller":
        return [_impact(f"{dev}.topology", LOW, "switch_topology")]
    return []


def _fdi(link_id: str, src: str, sink: str, kind: str) -> list[dict[str, Any]]:
    """False-data injections riding on one logical link."""
    ll = (src, sink)
    base = f"{link_id}.fdi.{src}"
    if kind == "load_controller":
        return [
            _impact(f"{base}.load_scaling_050", LOW, "load_scaling", {"factor": 0.5},
                    type_="false_data_injection", logical_link=ll),
            _impact(f"{base}.load_scaling_200", LOW, "load_scaling", {"factor": 2.0},
                    type_="false_data_injection", logical_link=ll),
        ]
    if kind == "pv_inverter":
        return [
            _impact(f"{base}.volt_var_no_active", LOW, "pv_volt_breakpoints",
                    {"q_fraction": -0.44, "active_fraction": 0.0}, type_="false_data_injection", logical_link=ll),
        ]
    if kind == "bess":
        return [_impact(f"{base}.max_discharge", LOW, "battery_max_discharge",
                        type_="false_data_injection", logical_link=ll)]
    if kind == "capacitor_bank":
        return [_impact(f"{base}.curtailment", LOW, "capacitor_curtailment", {"fraction": 0.0},
                        type_="false_data_injection", logical_link=ll)]
    return []


def build_medium(budget: float = 60) -> dict[str, Any]:
    """Feeder-automation network over the ``medium`` feeder preset.

    Control center (firewalled) → two substation routers → 45 field edge
    routers → controllers. Edge-to-substation links are exposed in the field
    and can be tapped as entry points; load controllers expose an entry
    point of their own.
    """
    model = medium()
    doc = _header("feeder_medium", MEDIUM_INVENTORY, "medium", budget)
    nodes: list[dict[str, Any]] = []
    links: list[dict[str, Any]] = []
    kind_of: dict[str, str] = {}

    def node(dev, kind, actions, element=None):
        props: dict[str, Any] = {"actions": actions}
        if element:
            props["sm_element"] = element
        nodes.append({"id": dev, "type": kind, "properties": props})
        kind_of[dev] = kind

    def link(a, b, actions=()):
        links.append({"id": f"{a}--{b}", "source": a, "target": b, "cost": 1.0,
                      "properties": {"actions": list(actions)}})

    workstations = ["ws_scada", "ws_eng1", "ws_eng2", "ws_hmi", "ws_hist"]
    subs = ["rtr_sub1", "rtr_sub2"]
    edges = [f"rtr_edge{i:02d}" for i in range(1, 46)]
    edges_of = {1: edges[:23], 2: edges[23:]}

    # field devices grouped by bus, buses spread over the feeder's edge routers
    attach: dict[str, str] = {}
    field: list[tuple[str, str, str]] = []  # (device, kind, element)
    for f in (1, 2):
        buses = [ld.bus for ld in model.loads if ld.bus.startswith(f"f{f}_")]
        for i, bus in enumerate(buses):
            edge = edges_of[f][i * len(edges_of[f]) // len(buses)]
            for dev, kind, el in ((f"lc_{bus}", "load_controller", f"load:{bus}"),
                                  (f"pv_{bus}", "pv_inverter", f"pv:{bus}")):
                field.append((dev, kind, el))
                attach[dev] = edge
    extra = [(f"bess_{b.bus}", "bess", b.name, b.bus) for b in model.batteries]
    extra += [(f"cap_{c.bus}", "capacitor_bank", c.name, c.bus) for c in model.capacitors]
    extra += [("swc_tie", "switch_controller", "switch:tie", "f1_12")]
    for dev, kind, el, bus in extra:
        field.append((dev, kind, el))
        attach[dev] = attach[f"lc_{bus}"]
    edge_sub = {e: ("rtr_sub1" if e in edges_of[1] else "rtr_sub2") for e in edges}
    devices_on_edge: dict[str, list[str]] = {e: [] for e in edges}
    for dev, e in attach.items():
        devices_on_edge[e].append(dev)

    # perimeter and control center
    node("fw_it", "firewall", [_access("fw_it.access.entry", 20, True, "phishing"),
                               _exploit("fw_it.exploit", 14, reveals=["fw_ot"])])
    node("fw_ot", "firewall", [_access("fw_ot.access", 8),
                               _exploit("fw_ot.exploit", 14, reveals=workstations)])
    scada_unlocks = [f"{dev}.curtailment" for dev, k, _ in field if k == "capacitor_bank"] + ["swc_tie.topology"]
    for ws in workstations:
        if ws == "ws_scada":
            node(ws, "workstation", [_access(f"{ws}.access", 6),
                                     _exploit(f"{ws}.exploit", 10, unlocks=scada_unlocks, reveals=subs,
                                              type_="rogue_master")])
        else:
            node(ws, "workstation", [_access(f"{ws}.access", 6), _exploit(f"{ws}.exploit", 10)])
    for s in subs:
        mine = [e for e in edges if edge_sub[e] == s]
        node(s, "router", [_access(f"{s}.access", 8),
                           _exploit(f"{s}.exploit", 12, reveals=mine + ["fw_ot"])])
    for e in edges:
        node(e, "router", [_access(f"{e}.access", 6),
                           _exploit(f"{e}.exploit", 10, reveals=devices_on_edge[e] + [edge_sub[e]])])
    for dev, kind, el in field:
        acts = []
        if kind == "load_controller":
            acts.append(_access(f"{dev}.access.entry", 22, True, "exploit_public_facing"))
        acts.append(_access(f"{dev}.access", 6))
        impacts = _field_impacts(dev, kind)
        acts.append(_exploit(f"{dev}.exploit", 14 if kind != "pv_inverter" else 10,
                             unlocks=[a["id"] for a in impacts], reveals=[attach[dev]]))
        node(dev, kind, acts + impacts, el)

    link("fw_it", "fw_ot")
    for ws in workstations:
        link("fw_ot", ws)
    for s in subs:
        link("fw_ot", s)
    for e in edges:
        link(edge_sub[e], e)
    for dev, _, _ in field:
        link(attach[dev], dev)

    doc["nodes"] = nodes
    doc["links"] = links
    sources = [dev for dev, _, _ in field]
    doc = derive_logical_links(doc, sources, ["ws_scada"])

    # link actions depend on the derived logical links
    for lk in doc["links"]:
        lid, props = lk["id"], lk["properties"]
        acts = []
        if lk["source"] in subs and lk["target"] in edges:
            acts.append(_access(f"{lid}.access.entry", 24, True, "field_tap"))
        if lk["source"] in edges or lk["target"] in edges:
            for src, sink in props["logical_links"]:
                acts += _fdi(lid, src, sink, kind_of[src])
        props["actions"] = acts
    return doc


def write_fixtures(directory: str | Path | None = None) -> list[Path]:
    directory = Path(directory) if directory else data_path("")
    out = []
    for name, builder in (("feeder_small.netjson", build_small), ("feeder_medium.netjson", build_medium)):
        path = directory / name
        path.write_text(json.dumps(builder(), indent=1) + "\n")
        out.append(path)
    return out


def build_micro_star() -> dict[str, Any]:
    """Hub router in front of three load controllers and a capacitor bank (small feeder)."""
    doc = _header("micro_star", ["router", "load_controller", "capacitor_bank"], "small", 14)
    field = [("lc2", "load_controller", "load:2"), ("lc3", "load_controller", "load:3"),
             ("lc4", "load_controller", "load:4"), ("cap2", "capacitor_bank", "cap:2")]
    nodes = [{"id": "hub", "type": "router", "properties": {"actions": [
        _access("hub.access.entry", 3, True),
        _exploit("hub.exploit", 3, reveals=[d for d, _, _ in field]),
    ]}}]
    for dev, kind, el in field:
        if kind == "load_controller":
            impacts = [_impact(f"{dev}.scale_050", 1, "load_scaling", {"factor": 0.5}),
                       _impact(f"{dev}.scale_200", 3, "load_scaling", {"factor": 2.0})]
        else:
            impacts = [_impact(f"{dev}.curtail", 1, "capacitor_curtailment", {"fraction": 0.0})]
        acts = [_access(f"{dev}.access", 2),
                _exploit(f"{dev}.exploit", 2, unlocks=[a["id"] for a in impacts])] + impacts
        nodes.append({"id": dev, "type": kind, "properties": {"sm_element": el, "actions": acts}})
    doc["nodes"] = nodes
    doc["links"] = [{"id": f"hub--{d}", "source": "hub", "target": d, "properties": {"actions": []}}
                    for d, _, _ in field]
    return doc


def build_micro_taps() -> dict[str, Any]:
    """Two tappable field links carrying false-data injections (small feeder)."""
    doc = _header("micro_taps", ["workstation", "router", "load_controller", "pv_inverter"], "small", 12)
    doc["nodes"] = [
        {"id": "cc", "type": "workstation", "properties": {"actions": []}},
        {"id": "rtr", "type": "router", "properties": {"actions": [
            _access("rtr.access", 2), _exploit("rtr.exploit", 3, reveals=["lc3", "pv4"])]}},
        {"id": "lc3", "type": "load_controller", "properties": {"sm_element": "load:3", "actions": [
            _access("lc3.access", 2),
            _exploit("lc3.exploit", 3, unlocks=["lc3.scale_200"]),
            _impact("lc3.scale_200", 2, "load_scaling", {"factor": 2.0})]}},
        {"id": "pv4", "type": "pv_inverter", "properties": {"sm_element": "pv:4", "actions": [
            _access("pv4.access", 2),
            _exploit("pv4.exploit", 2, unlocks=["pv4.disconnect"]),
            _impact("pv4.disconnect", 1, "pv_disconnect")]}},
    ]
    links = [("rtr", "cc"), ("lc3", "rtr"), ("pv4", "rtr")]
    doc["links"] = [{"id": f"{a}--{b}", "source": a, "target": b, "properties": {"actions": []}} for a, b in links]
    doc = derive_logical_links(doc, ["lc3", "pv4"], ["cc"])
    for lk in doc["links"]:
        props = lk["properties"]
        if lk["id"] == "rtr--cc":
            props["actions"] = [_access("rtr--cc.tap", 4, True, "field_tap")] + [
                _impact(f"rtr--cc.fdi.{src}", 2, h, p, type_="false_data_injection", logical_link=(src, sink))
                for (src, sink), (h, p) in zip(props["logical_links"],
                                              [("load_scaling", {"factor": 0.5}), ("pv_disconnect", {})])
            ]
        elif lk["id"] == "lc3--rtr":
            props["actions"] = [_access("lc3--rtr.tap", 5, True, "field_tap"),
                                _impact("lc3--rtr.fdi", 1, "load_scaling", {"factor": 1.5},
                                        type_="false_data_injection", logical_link=("lc3", "cc"))]
    return doc


# (builder, budget) pairs whose feasible-sequence sets are small enough to enumerate
MICRO_CASES = {
    "small": (build_small, 10),
    "star": (build_micro_star, 16),
    "taps": (build_micro_taps, 14),
}
