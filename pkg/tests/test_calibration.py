from __future__ import annotations

import itertools
import json
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cyberasm.calibration import (
    CalibrationError,
    Comparison,
    RatingConfig,
    bootstrap_ratings,
    cost_document,
    expected_score,
    import_direct_costs,
    merge_cost_maps,
    ratings_to_costs,
    read_comparisons,
    sequential_ratings,
    update,
    write_comparisons,
)
from oracles import elo_expected, panel_comparisons

ratings = st.floats(-3000, 5000, allow_nan=False)


def _comps(records):
    return [Comparison(a, b, o) for a, b, o in records]


def test_expected_score_values():
    assert expected_score(1000, 1000) == 0.5
    assert expected_score(1400, 1000, 400) == pytest.approx(1 / 1.1, abs=1e-12)
    assert expected_score(1400, 1000, 400) == pytest.approx(0.9090909090909091, abs=1e-12)
    assert expected_score(1234.5, 987.0, 250) == pytest.approx(elo_expected(1234.5, 987.0, 250), abs=1e-15)


@settings(max_examples=300)
@given(ratings, ratings, st.floats(1, 2000))
def test_antisymmetry(a, b, k_e):
    assert expected_score(a, b, k_e) + expected_score(b, a, k_e) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=300)
@given(ratings, ratings, st.sampled_from([0.0, 0.5, 1.0]), st.floats(1, 1000), st.floats(0.5, 100))
def test_update_conserves_sum(a, b, g, k_e, k_u):
    na, nb = update(a, b, g, RatingConfig(k_e=k_e, k_u=k_u))
    assert na + nb == pytest.approx(a + b, rel=1e-12, abs=1e-9)


def test_update_hand_values():
    assert update(1000, 1000, 1.0) == (1016.0, 984.0)
    assert update(1000, 1000, 0.5) == (1000.0, 1000.0)
    assert update(1000, 1000, 0.0) == (984.0, 1016.0)
    with pytest.raises(CalibrationError):
        update(1000, 1000, 0.7)


def test_comparison_and_config_validation():
    with pytest.raises(CalibrationError):
        Comparison("a", "a", 1.0)
    with pytest.raises(CalibrationError):
        Comparison("a", "b", 2.0)
    with pytest.raises(CalibrationError):
        RatingConfig(k_e=0)
    with pytest.raises(CalibrationError):
        RatingConfig(bootstrap_resamples=0)


def test_single_comparison_orders_ratings():
    r = bootstrap_ratings([Comparison("a", "b", 1.0)], RatingConfig(bootstrap_resamples=50)).ratings
    assert r == {"a": 1016.0, "b": 984.0}


def test_cyclic_evidence_within_k_u():
    comps = [Comparison("A", "B", 1.0), Comparison("B", "C", 1.0), Comparison("C", "A", 1.0)] * 2
    # every ordering, by brute force
    finals = []
    for perm in itertools.permutations(range(len(comps))):
        finals.append(sequential_ratings([comps[i] for i in perm], RatingConfig()))
    for f in finals:
        assert max(f.values()) - min(f.values()) < 2 * 32
    r = bootstrap_ratings(comps, RatingConfig(bootstrap_resamples=1000, rng_seed=4)).ratings
    assert max(r.values()) - min(r.values()) <= 32
    med = {k: float(np.median([f[k] for f in finals])) for k in "ABC"}
    for k in "ABC":
        assert abs(r[k] - med[k]) <= 32


def test_bootstrap_determinism_and_unrated():
    records, _ = panel_comparisons(3, 6, 40)
    comps = _comps(records)
    cfg = RatingConfig(bootstrap_resamples=200, rng_seed=17)
    a = bootstrap_ratings(comps, cfg, actions=["never_compared"])
    b = bootstrap_ratings(comps, cfg, actions=["never_compared"])
    assert a.ratings == b.ratings
    assert a.unrated == ["never_compared"] and a.ratings["never_compared"] == 1000.0
    c = bootstrap_ratings(comps, RatingConfig(bootstrap_resamples=200, rng_seed=18))
    assert c.ratings != {k: v for k, v in a.ratings.items() if k != "never_compared"}
    with pytest.raises(CalibrationError):
        bootstrap_ratings([], cfg)


def test_bootstrap_recovers_latent_order():
    records, latent = panel_comparisons(0, 8, 300)
    r = bootstrap_ratings(_comps(records), RatingConfig(bootstrap_resamples=300)).ratings
    from scipy.stats import spearmanr

    ids = sorted(latent)
    assert spearmanr([r[i] for i in ids], [latent[i] for i in ids]).statistic > 0.9


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_order_robustness(seed):
    records, _ = panel_comparisons(seed)
    comps = _comps(records)
    shuffled = comps[:]
    random.Random(1000 + seed).shuffle(shuffled)
    a = bootstrap_ratings(comps, RatingConfig(bootstrap_resamples=1000, rng_seed=1)).ratings
    b = bootstrap_ratings(shuffled, RatingConfig(bootstrap_resamples=1000, rng_seed=2)).ratings
    assert max(abs(a[k] - b[k]) for k in a) <= 0.05 * 32


def test_ratings_to_costs_shift():
    costs, shift = ratings_to_costs({"a": -20.0, "b": 10.0})
    assert shift == 20.0 and costs == {"a": 0.0, "b": 30.0}
    costs, shift = ratings_to_costs({"a": 5.0})
    assert shift == 0.0 and costs == {"a": 5.0}


def test_comparison_file_round_trip(tmp_path):
    comps = [Comparison("a", "b", 1.0, "expert1"), Comparison("b", "c", 0.5)]
    path = tmp_path / "c.jsonl"
    write_comparisons(comps, path)
    assert read_comparisons(path) == comps
    path.write_text('{"action_a": "a"}\n')
    with pytest.raises(CalibrationError, match=":1:"):
        read_comparisons(path)


def test_direct_cost_groups():
    doc = {
        "groups": {
            "built-in functionality": {"cost": 6, "members": ["pv.disconnect", "lc.scale"]},
            "code injection": {"cost": 14, "members": ["pv.unbalanced"]},
        },
        "costs": {"lc.exploit_t0819": 14},
    }
    costs = import_direct_costs(doc, ["pv.disconnect", "lc.scale", "pv.unbalanced", "lc.exploit_t0819"])
    assert costs == {"pv.disconnect": 6, "lc.scale": 6, "pv.unbalanced": 14, "lc.exploit_t0819": 14}


@pytest.mark.parametrize(
    "doc, ids, match",
    [
        ({"costs": {"a": -1}}, None, "negative"),
        ({"groups": {"g": {"cost": 6, "members": ["a"]}}, "costs": {"a": 7}}, None, "conflicting"),
        ({"costs": {"a": 1}}, ["a", "b"], "no cost"),
        ({"costs": {"a": "cheap"}}, None, "not a number"),
    ],
)
def test_direct_cost_errors(doc, ids, match):
    with pytest.raises(CalibrationError, match=match):
        import_direct_costs(doc, ids)


def test_mixed_sources_need_affine():
    elo = cost_document({"a": 100.0}, "elo")
    direct = cost_document({"b": 6.0}, "direct")
    with pytest.raises(CalibrationError, match="affine"):
        merge_cost_maps([elo, direct])
    assert merge_cost_maps([elo, direct], affine=(0.1, 2.0)) == {"a": 12.0, "b": 6.0}
    assert json.loads(json.dumps(elo))["x_asm"]["kind"] == "costs"
