from __future__ import annotations

import copy
import json
import random
from collections import Counter

import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cyberasm.ci import (
    CIError,
    LogicalLinkError,
    derive_logical_links,
    load_ci,
    to_document,
    validate_ci,
)
from cyberasm.fixtures import MEDIUM_INVENTORY, build_medium, build_small, load_fixture
from oracles import brute_force_logical_links


def _topology(nodes, edges, **ext):
    return {
        "type": "NetworkGraph",
        "x_asm": {"x_asm_schema": "1.0", **ext},
        "nodes": [{"id": n, "type": "device", "properties": {"actions": []}} for n in nodes],
        "links": [{"source": a, "target": b, "properties": {"actions": []}} for a, b in edges],
    }


def test_small_fixture_counts(small_ci):
    assert len(small_ci.devices) == 3
    assert len(small_ci.links) == 2
    # hand count: cc 2, lc 3, pv 2, l_lc 2, l_pv 0
    assert small_ci.n_actions == 9
    assert small_ci.n_actions == len(small_ci.actions)
    assert small_ci.entry_points() == ["l_lc.access.entry", "lc.access.entry"]


def test_medium_fixture_inventory(medium_ci):
    assert len(medium_ci.devices) == 244
    counts = Counter(d.device_type for d in medium_ci.devices)
    assert dict(counts) == MEDIUM_INVENTORY
    assert medium_ci.n_actions == len(medium_ci.actions)


def test_bundled_files_match_builders():
    assert load_fixture("feeder_small.netjson") == json.loads(json.dumps(build_small()))
    assert load_fixture("feeder_medium.netjson") == json.loads(json.dumps(build_medium()))


def test_loaded_ci_validates_clean(small_ci, medium_ci):
    assert len(validate_ci(small_ci)) == 0
    assert len(validate_ci(medium_ci)) == 0


def test_empty_device_list_has_no_entry_point():
    with pytest.raises(CIError) as exc:
        load_ci(_topology([], []))
    assert "no_entry_point" in {v.code for v in exc.value.violations}


def test_schema_version_is_required(small_doc):
    doc = copy.deepcopy(small_doc)
    doc["x_asm"]["x_asm_schema"] = "2.0"
    with pytest.raises(CIError, match="x_asm_schema"):
        load_ci(doc)


def test_unknown_keys_survive_round_trip(small_doc):
    doc = copy.deepcopy(small_doc)
    doc["x_asm"]["vendor_note"] = {"keep": True}
    doc["nodes"][0]["properties"]["firmware"] = "1.2"
    doc["nodes"][0]["properties"]["actions"][0]["cvss_hint"] = 7.5
    ci = load_ci(doc)
    out = to_document(ci)
    assert out["x_asm"]["vendor_note"] == {"keep": True}
    assert out["nodes"][0]["properties"]["firmware"] == "1.2"
    assert out["nodes"][0]["properties"]["actions"][0]["cvss_hint"] == 7.5
    assert load_ci(out).fingerprint() == ci.fingerprint()


def _violation_codes(doc):
    with pytest.raises(CIError) as exc:
        load_ci(doc)
    return {v.code for v in exc.value.violations}, exc.value


def test_dangling_unlocked_impact(small_doc):
    doc = copy.deepcopy(small_doc)
    doc["nodes"][0]["properties"]["actions"][1]["unlocked_impacts"] = ["does.not.exist"]
    codes, exc = _violation_codes(doc)
    assert codes == {"dangling_reference"}
    assert "cc.exploit" in str(exc) and "<document 0>" in str(exc)


def test_logical_link_not_on_link(small_doc):
    doc = copy.deepcopy(small_doc)
    doc["links"][0]["properties"]["actions"][1]["logical_link"] = ["pv", "cc"]
    codes, _ = _violation_codes(doc)
    assert codes == {"logical_link_not_on_link"}


@pytest.mark.parametrize(
    "mutate, code",
    [
        (lambda d: d["nodes"][1]["properties"]["actions"][0].update(cost=-1), "negative_cost"),
        (lambda d: d["nodes"][1]["properties"]["actions"][0].update(revealed_devices=["cc"]), "field_mismatch"),
        (lambda d: d["links"][0]["properties"]["actions"][0].update(entry_point=False), "link_access_not_entry"),
        (lambda d: d["nodes"][2].update(id="cc"), "duplicate_id"),
        (lambda d: d["nodes"][0].update(type="mainframe"), "unknown_device_type"),
        (lambda d: d["links"][1].update(target="ghost"), "dangling_reference"),
    ],
)
def test_constructed_violations(small_doc, mutate, code):
    doc = copy.deepcopy(small_doc)
    mutate(doc)
    codes, _ = _violation_codes(doc)
    assert code in codes


def test_exploit_on_link_is_rejected(small_doc):
    doc = copy.deepcopy(small_doc)
    doc["links"][1]["properties"]["actions"] = [
        {"id": "l_pv.exploit", "category": "exploit", "cost": 1, "unlocked_impacts": [], "revealed_devices": []}
    ]
    codes, _ = _violation_codes(doc)
    assert "bad_category" in codes


def test_malformed_action_names_document_and_entity(small_doc, tmp_path):
    doc = copy.deepcopy(small_doc)
    doc["nodes"][1]["properties"]["actions"][0]["category"] = "sabotage"
    path = tmp_path / "bad.netjson"
    path.write_text(json.dumps(doc))
    with pytest.raises(CIError, match=r"bad\.netjson.*lc\.access\.entry"):
        load_ci(path)


def test_overlay_and_cost_documents(small_doc):
    doc = copy.deepcopy(small_doc)
    extra = doc["nodes"][2]["properties"]["actions"].pop()  # pv.disconnect moves to an overlay
    overlay = {"x_asm": {"x_asm_schema": "1.0", "kind": "actions"}, "devices": {"pv": [extra]}}
    costs = {"x_asm": {"x_asm_schema": "1.0", "kind": "costs", "source": "direct"}, "costs": {"pv.disconnect": 9}}
    ci = load_ci([doc, overlay, costs])
    assert ci.actions["pv.disconnect"].cost == 9
    assert ci.owner["pv.disconnect"] == ("device", "pv")
    assert ci.n_actions == 9


def test_scaled_multiplies_every_cost(small_ci):
    big = small_ci.scaled(3)
    assert all(big.actions[a].cost == 3 * small_ci.actions[a].cost for a in small_ci.actions)
    with pytest.raises(ValueError):
        small_ci.scaled(0)


# ---------------------------------------------------------------------------
# logical links


def _carried(doc):
    return {lk["source"] + "|" + lk["target"]: {tuple(p) for p in lk["properties"]["logical_links"]} for lk in doc["links"]}


def test_two_sensors_behind_a_switch():
    doc = _topology(["sensor_a", "sensor_b", "switch", "controller"],
                    [("sensor_a", "switch"), ("sensor_b", "switch"), ("switch", "controller")])
    out = _carried(derive_logical_links(doc, ["sensor_a", "sensor_b"], ["controller"]))
    assert out["switch|controller"] == {("sensor_a", "controller"), ("sensor_b", "controller")}
    assert out["sensor_a|switch"] == {("sensor_a", "controller")}
    assert out["sensor_b|switch"] == {("sensor_b", "controller")}


def test_single_edge():
    out = _carried(derive_logical_links(_topology(["a", "b"], [("a", "b")]), ["a"], ["b"]))
    assert out == {"a|b": {("a", "b")}}


@pytest.mark.parametrize("k", [1, 4, 9])
def test_star_hub_carries_k(k):
    ctrls = [f"c{i}" for i in range(k)]
    doc = _topology(ctrls + ["hub", "center"], [(c, "hub") for c in ctrls] + [("hub", "center")])
    out = _carried(derive_logical_links(doc, ctrls, ["center"]))
    assert len(out["hub|center"]) == k


def test_input_document_not_mutated():
    doc = _topology(["a", "b"], [("a", "b")])
    before = copy.deepcopy(doc)
    derive_logical_links(doc, ["a"], ["b"])
    assert doc == before


def test_unreachable_sink_and_overlap():
    doc = _topology(["a", "b", "c"], [("a", "b")])
    with pytest.raises(LogicalLinkError, match="unreachable"):
        derive_logical_links(doc, ["a"], ["c"])
    with pytest.raises(LogicalLinkError, match="disjoint"):
        derive_logical_links(doc, ["a"], ["a"])


def test_ambiguity_lexicographic_and_strict():
    # square: s-a-t and s-b-t are equally short; default picks the "a" route
    doc = _topology(["s", "a", "b", "t"], [("s", "a"), ("a", "t"), ("s", "b"), ("b", "t")])
    out = _carried(derive_logical_links(doc, ["s"], ["t"]))
    assert out["s|a"] == out["a|t"] == {("s", "t")}
    assert out["s|b"] == out["b|t"] == set()
    with pytest.raises(LogicalLinkError, match="strict"):
        derive_logical_links(doc, ["s"], ["t"], strict=True)


def _random_tree(seed, n):
    rng = random.Random(seed)
    nodes = [f"n{i:02d}" for i in range(n)]
    edges = [(nodes[i], nodes[rng.randrange(i)]) for i in range(1, n)]
    rng.shuffle(nodes)
    k = rng.randint(1, max(1, n // 2))
    sources, rest = nodes[:k], nodes[k:]
    sinks = rest[: rng.randint(1, min(3, len(rest)))]
    return edges, sources, sinks


@pytest.mark.parametrize("seed", range(40))
def test_random_trees_against_path_enumeration(seed):
    edges, sources, sinks = _random_tree(seed, 4 + seed % 12)
    nodes = sorted({x for e in edges for x in e})
    doc = _topology(nodes, edges)
    got = {
        frozenset((lk["source"], lk["target"])): {tuple(p) for p in lk["properties"]["logical_links"]}
        for lk in derive_logical_links(doc, sources, sinks)["links"]
    }
    assert got == brute_force_logical_links(edges, sources, sinks)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(5, 12), st.integers(0, 4))
def test_random_graphs_with_cycles(seed, n, extra):
    rng = random.Random(seed)
    g = nx.gnm_random_graph(n, n - 1 + extra, seed=seed)
    if not nx.is_connected(g):
        return
    edges = [(f"n{a:02d}", f"n{b:02d}") for a, b in g.edges]
    nodes = sorted({x for e in edges for x in e})
    rng.shuffle(nodes)
    sources, sinks = nodes[:2], nodes[2:3]
    doc = _topology(sorted(nodes), edges)
    first = derive_logical_links(doc, sources, sinks)
    assert first == derive_logical_links(doc, sources, sinks)  # deterministic
    got = {
        frozenset((lk["source"], lk["target"])): {tuple(p) for p in lk["properties"]["logical_links"]}
        for lk in first["links"]
    }
    assert got == brute_force_logical_links(edges, sources, sinks)
    # every carried pair's route really uses the link (independent path check)
    gx = nx.Graph(edges)
    for link, pairs in got.items():
        for s, t in pairs:
            assert nx.shortest_path_length(gx, s, t) == min(
                nx.shortest_path_length(gx, s, u) + 1 + nx.shortest_path_length(gx, v, t)
                for u, v in (tuple(link), tuple(link)[::-1])
            )
