from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from cyberasm.baseline import (
    BREAKDOWN_KEYS,
    SampleSet,
    budget_breakdown,
    ecdf,
    merge_sample_sets,
    p_cdf,
    sample_random,
    sequence_hash,
)
from cyberasm.sdmo import enumerate_sequences


def test_exhausted_space_is_flagged(small_model):
    # only three feasible sequences exist at budget 7
    s = sample_random(small_model, 7, 10, seed=0, max_consecutive_duplicates=200)
    assert len(s) == 3 and s.shortfall
    assert {x.actions for x in s.samples} == set(enumerate_sequences(small_model.engine, 7))


def test_samples_are_distinct_feasible_and_scored(small_model):
    s = sample_random(small_model, 12, 12, seed=4)
    assert len(s) == 12 and not s.shortfall
    assert len({x.hash for x in s.samples}) == 12
    for x in s.samples:
        assert x.hash == sequence_hash(x.actions)
        states = small_model.engine.replay(x.actions, budget=12)
        assert not small_model.engine.affordable_actions(states[-1], 12)
        assert x.y == small_model.y(x.actions)
    assert s.ci_fingerprint == small_model.ci.fingerprint()


def test_sampling_is_deterministic(small_model):
    a = sample_random(small_model, 12, 10, seed=9)
    b = sample_random(small_model, 12, 10, seed=9)
    assert a.to_dict() == b.to_dict()


def test_count_must_be_positive(small_model):
    with pytest.raises(ValueError):
        sample_random(small_model, 12, 0, seed=0)


def test_p_cdf_strictly_greater():
    ys = [0.9, 0.8, 0.8, 0.7]
    assert p_cdf(ys, 0.8).value == 0.25  # ties count against the optimizer
    assert p_cdf(ys, 0.6).value == 1.0
    assert p_cdf(ys, 0.95).value == 0.0
    assert p_cdf(ys, 0.9).worse == 0
    with pytest.raises(ValueError):
        p_cdf([], 0.5)


def test_p_cdf_median():
    ys = np.linspace(0, 1, 101)
    assert p_cdf(ys, 0.5).value == pytest.approx(0.5, abs=0.01)


@settings(max_examples=100)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=50), st.floats(0, 1), st.floats(0, 1))
def test_p_cdf_monotone_and_interval(ys, a, b):
    lo, hi = sorted((a, b))
    assert p_cdf(ys, lo).value >= p_cdf(ys, hi).value
    r = p_cdf(ys, lo)
    assert 0 <= r.low <= r.value <= r.high <= 1


def test_wilson_interval_by_formula():
    k, n = 93, 100
    z = norm.ppf(0.975)
    p = k / n
    centre = (p + z * z / (2 * n)) / (1 + z * z / n)
    half = z / (1 + z * z / n) * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    r = p_cdf([1.0] * k + [0.0] * (n - k), 0.5)
    assert r.value == 0.93
    assert (r.low, r.high) == pytest.approx((centre - half, centre + half), abs=1e-9)


def test_ecdf():
    xs, ps = ecdf([0.3, 0.1, 0.2])
    assert list(xs) == [0.1, 0.2, 0.3]
    assert list(ps) == pytest.approx([1 / 3, 2 / 3, 1.0])


def test_merge_deduplicates(small_model):
    a = sample_random(small_model, 12, 8, seed=1)
    b = sample_random(small_model, 12, 8, seed=2)
    m = merge_sample_sets([a, b])
    hashes = [x.hash for x in m.samples]
    assert len(hashes) == len(set(hashes)) == len(set(hashes) | {x.hash for x in a.samples + b.samples})
    other = SampleSet([], 0, 99.0, a.ci_fingerprint)
    with pytest.raises(ValueError):
        merge_sample_sets([a, other])
    with pytest.raises(ValueError):
        merge_sample_sets([])


@pytest.mark.parametrize("name", ["s.json", "s.json.gz"])
def test_save_load_round_trip(small_model, tmp_path, name):
    s = sample_random(small_model, 12, 6, seed=3)
    s.save(tmp_path / name)
    back = SampleSet.load(tmp_path / name)
    assert back.to_dict() == s.to_dict()
    s.save(tmp_path / ("again_" + name))
    assert (tmp_path / name).read_bytes() == (tmp_path / ("again_" + name)).read_bytes()


def test_budget_breakdown(small_ci):
    split = budget_breakdown(["lc.access.entry", "lc.exploit", "lc.scale_050"], small_ci)
    assert split == pytest.approx({"access_entry": 0.5, "access_lateral": 0.0, "exploit": 0.3, "impact": 0.2})
    assert sum(split.values()) == pytest.approx(1.0)
    assert budget_breakdown(["lc.access.entry"], small_ci)["access_entry"] == 1.0
    assert budget_breakdown([], small_ci) == dict.fromkeys(BREAKDOWN_KEYS, 0.0)
