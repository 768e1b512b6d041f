"""Acceptance gate: one test per release criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s`` to see the summary
lines next to the test results.
"""

from __future__ import annotations

import json
import math
import os
import random
import subprocess
import sys
import time

import numpy as np
import pytest

from cyberasm.asm import build_model
from cyberasm.baseline import p_cdf, sample_random
from cyberasm.calibration import Comparison, RatingConfig, bootstrap_ratings, expected_score, update
from cyberasm.ci import derive_logical_links, load_ci
from cyberasm.engine import CyberEngine
from cyberasm.fixtures import MICRO_CASES, build_small, load_fixture
from cyberasm.sdmo import MCTS, SearchConfig, enumerate_sequences, random_walk, search
from cyberasm.simulation.kpi import compute_spf, compute_vi, compute_vispf
from oracles import RawCI, brute_force_logical_links, conformance_walks, elo_expected, hand_spf, hand_vi, panel_comparisons


@pytest.fixture
def verdict(capsys):
    def emit(number: int, title: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[acceptance {number}] {'PASS' if ok else 'FAIL'} {title}: {detail}")
        assert ok, detail

    return emit


def _micro(name, scale=1.0):
    builder, budget = MICRO_CASES[name]
    ci = load_ci(builder())
    if scale != 1.0:
        ci = ci.scaled(scale)
    return build_model(ci, "builtin"), budget * scale


def test_1_transition_table_conformance(verdict):
    doc = load_fixture("feeder_small.netjson")
    started = time.monotonic()
    steps, bad = conformance_walks(CyberEngine(load_ci(doc)), RawCI(doc), walks=1000, seed=2024)
    elapsed = time.monotonic() - started
    verdict(1, "transition-table conformance", not bad and elapsed < 30,
            f"1000 walks, {steps} steps, {len(bad)} mismatches, {elapsed:.1f} s (limit 30 s)")


def test_2_oracle_optimality(verdict):
    started = time.monotonic()
    details, ok = [], True
    for name in sorted(MICRO_CASES):
        model, budget = _micro(name)
        seqs = enumerate_sequences(model.engine, budget)
        assert len(seqs) <= 10**4
        best = min(model.y(s) for s in seqs)
        path = search(model, SearchConfig(budget=budget, iterations=10 * len(seqs), rng_seed=0))
        ok &= abs(path.y - best) <= 1e-9
        details.append(f"{name}: {len(seqs)} sequences, y* {path.y:.9f} vs min {best:.9f}")
    elapsed = time.monotonic() - started
    verdict(2, "oracle optimality", ok and elapsed < 120, "; ".join(details) + f"; {elapsed:.1f} s (limit 120 s)")


@pytest.mark.slow
def test_3_p_cdf_on_medium_fixture(verdict):
    ci = load_ci(load_fixture("feeder_medium.netjson"))
    assert len(ci.devices) >= 200
    budget = float(ci.meta["x_asm"]["budget"])
    samples = sample_random(build_model(ci, "builtin"), budget, 5000, seed=0)
    scores, ok = [], len(samples) == 5000
    for seed in (1, 2, 3):
        started = time.monotonic()
        path = search(build_model(ci, "builtin"), SearchConfig(budget=budget, iterations=2000, rng_seed=seed))
        elapsed = time.monotonic() - started
        score = p_cdf(samples, path.y).value
        ok &= score >= 0.9 and elapsed < 1800
        scores.append(f"seed {seed}: y {path.y:.5f}, p_CDF {score:.4f}, {elapsed:.0f} s")
    verdict(3, "p_CDF at 2000 iterations vs 5000 samples", ok, "; ".join(scores))


def test_4_budget_safety_fuzz(verdict):
    rng = random.Random(35)
    engines = {name: _micro(name)[0].engine for name in MICRO_CASES}
    started = time.monotonic()
    episodes = violations = 0
    # rollout episodes: uniform random walks under random budgets, fractional ones included
    while episodes < 95_000:
        engine = engines[rng.choice(sorted(engines))]
        budget = rng.choice([rng.uniform(0.5, 30.0), float(rng.randint(1, 30))])
        final = random_walk(engine, engine.init_states(), budget, rng)
        violations += math.fsum(engine.cost[a] for a in final.action_log) > budget
        episodes += 1
    # search episodes: every node of every tree must be within budget
    searched = 0
    while searched < 5_000:
        name = rng.choice(sorted(engines))
        model, _ = _micro(name)
        budget = rng.uniform(3.0, 25.0)
        mcts = MCTS(model, SearchConfig(budget=budget, iterations=100, rng_seed=rng.randrange(2**31)))
        root = mcts._node(mcts.initial)
        for _ in range(100):
            mcts.iterate(root)
        path = mcts.search()
        for node in root.iter_nodes():
            violations += math.fsum(model.engine.cost[a] for a in node.state.action_log) > budget
        violations += path.total_cost > budget
        searched += 100 + path.stats["iterations"]
    episodes += searched
    elapsed = time.monotonic() - started
    verdict(4, "budget safety", violations == 0 and episodes >= 10**5 and elapsed < 300,
            f"{episodes} episodes, {violations} violations, {elapsed:.1f} s (limit 300 s)")


def test_5_elo_algebra(verdict):
    rng = np.random.default_rng(5)
    worst_sym = worst_cons = worst_oracle = 0.0
    for _ in range(10_000):
        a, b = rng.uniform(-2000, 4000, 2)
        o = rng.choice([0.0, 0.5, 1.0])
        worst_sym = max(worst_sym, abs(expected_score(a, b) + expected_score(b, a) - 1))
        worst_oracle = max(worst_oracle, abs(expected_score(a, b) - elo_expected(a, b)))
        na, nb = update(a, b, o)
        worst_cons = max(worst_cons, abs((na + nb) - (a + b)))
    records, _ = panel_comparisons(0)
    comps = [Comparison(x, y, o) for x, y, o in records]
    r1 = bootstrap_ratings(comps, RatingConfig(bootstrap_resamples=200, rng_seed=9)).ratings
    r2 = bootstrap_ratings(comps, RatingConfig(bootstrap_resamples=200, rng_seed=9)).ratings
    shuffled = comps[:]
    random.Random(77).shuffle(shuffled)
    m1 = bootstrap_ratings(comps, RatingConfig(bootstrap_resamples=1000, rng_seed=1)).ratings
    m2 = bootstrap_ratings(shuffled, RatingConfig(bootstrap_resamples=1000, rng_seed=2)).ratings
    gap = max(abs(m1[k] - m2[k]) for k in m1)
    ok = worst_sym <= 1e-12 and worst_cons <= 1e-9 and worst_oracle <= 1e-12 and r1 == r2 and gap <= 0.05 * 32
    verdict(5, "Elo algebra", ok,
            f"antisymmetry err {worst_sym:.1e}, conservation err {worst_cons:.1e}, seed-deterministic {r1 == r2}, "
            f"shuffle median gap {gap:.3f} (limit {0.05 * 32:.2f})")


def test_6_kpi_math(verdict):
    checks = [
        (compute_vi([[1.0, 1.0, 1.3]]), 0.2 / 1.1),
        (compute_vi([[1.0, 1.0, 1.3]]), hand_vi([[1.0, 1.0, 1.3]])),
        (compute_spf(1.0, 1.0)[0], math.cos(math.pi / 4)),
        (compute_spf(1.0, 1.0, "tanh")[0], math.cos(math.tanh(1.0))),
        (compute_spf(-2.0, 0.5)[0], hand_spf(-2.0, 0.5)),
        (compute_spf(0.0, 0.4)[0], 0.0),
        (compute_vispf(0.2, 0.8)[0], 0.8),
        (compute_vispf(0.0, 1.0)[0], 1.0),
        (compute_vispf(1.0, 0.0)[0], 0.0),
    ]
    worst = max(abs(got - want) for got, want in checks)
    rng = np.random.default_rng(6)
    n = 100_000
    vi = rng.uniform(0, 1, n)
    spf, _ = compute_spf(rng.normal(0, 3, n), rng.normal(0, 3, n), "arctan")
    val, _ = compute_vispf(vi, spf)
    in_range = bool(np.all((val >= 0) & (val <= 1)))
    verdict(6, "KPI math", worst <= 1e-9 and in_range,
            f"worst example error {worst:.1e}; VISPF in [0,1] on {n} fuzzed inputs: {in_range}")


@pytest.mark.parametrize("factor", [0.5, 3, 1000])
def test_7_scale_invariance(verdict, factor):
    details, ok = [], True
    for name in sorted(MICRO_CASES):
        model, budget = _micro(name)
        scaled, sbudget = _micro(name, factor)
        same_set = set(enumerate_sequences(model.engine, budget)) == set(enumerate_sequences(scaled.engine, sbudget))
        a = search(model, SearchConfig(budget=budget, iterations=200, rng_seed=13))
        b = search(scaled, SearchConfig(budget=sbudget, iterations=200, rng_seed=13))
        ok &= same_set and a.actions == b.actions
        details.append(f"{name}: same set {same_set}, same path {a.actions == b.actions}")
    verdict(7, f"scale invariance x{factor}", ok, "; ".join(details))


def test_8_end_to_end_determinism(verdict, tmp_path):
    ci = tmp_path / "small.netjson"
    ci.write_text(json.dumps(build_small()))
    out = tmp_path / "path.json"
    env = dict(os.environ, SOURCE_DATE_EPOCH="1700000000")
    env.pop("ASM_SM_CMD", None)
    blobs = []
    for _ in range(2):
        subprocess.run([sys.executable, "-m", "cyberasm.cli", "optimize", "--ci", str(ci), "--iterations", "200",
                        "--seed", "42", "--out", str(out)], check=True, env=env, capture_output=True)
        blobs.append(out.read_bytes())
    verdict(8, "byte-identical optimize runs", blobs[0] == blobs[1], f"{len(blobs[0])} bytes, identical {blobs[0] == blobs[1]}")


def _topology(nodes, edges):
    return {
        "type": "NetworkGraph",
        "x_asm": {"x_asm_schema": "1.0"},
        "nodes": [{"id": n, "type": "device", "properties": {"actions": []}} for n in nodes],
        "links": [{"source": a, "target": b, "properties": {"actions": []}} for a, b in edges],
    }


def test_9_logical_link_derivation(verdict):
    doc = _topology(["sensor_a", "sensor_b", "switch", "controller"],
                    [("sensor_a", "switch"), ("sensor_b", "switch"), ("switch", "controller")])
    out = derive_logical_links(doc, ["sensor_a", "sensor_b"], ["controller"])
    counts = {lk["source"] + "|" + lk["target"]: len(lk["properties"]["logical_links"]) for lk in out["links"]}
    two_sensor_ok = counts == {"sensor_a|switch": 1, "sensor_b|switch": 1, "switch|controller": 2}
    rng = random.Random(9)
    agree = 0
    for trial in range(200):
        n = rng.randint(2, 14)
        nodes = [f"n{i:02d}" for i in range(n)]
        edges = [(nodes[i], nodes[rng.randrange(i)]) for i in range(1, n)]
        order = nodes[:]
        rng.shuffle(order)
        k = rng.randint(1, max(1, n - 1))
        sources, sinks = order[:k], order[k:][: rng.randint(1, n - k)]
        got = {
            frozenset((lk["source"], lk["target"])): {tuple(p) for p in lk["properties"]["logical_links"]}
            for lk in derive_logical_links(_topology(nodes, edges), sources, sinks)["links"]
        }
        agree += got == brute_force_logical_links(edges, sources, sinks)
    verdict(9, "logical-link derivation", two_sensor_ok and agree == 200,
            f"two-sensor counts {counts}; {agree}/200 random trees match path enumeration")
