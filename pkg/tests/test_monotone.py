from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from doeblin.bridge import build_bridge, taboo_and_potential
from doeblin.errors import UsageError
from doeblin.models import advance, parse_model
from doeblin.monotone import (
    CENSORED,
    EXACT,
    LoynesSequence,
    backward_gap_stats,
    loynes_value,
    sample_potential_pp,
    sample_taboo_pp,
)
from doeblin.noise import NoiseField

CRITICAL = parse_model("queue:geo:0.2:geo:0.2")
STABLE = parse_model("queue:geo:0.3:geo:0.2")


def _field_with_increments(model, wanted, tries=200_000):
    """A common field whose workload increments at times -1, -2, ... start with ``wanted``."""
    depths = -np.arange(1, len(wanted) + 1)
    for seed in range(tries):
        f = NoiseField(seed, "common")
        incr = model.increments(f.block(depths, 0, 2))
        if list(incr) == list(wanted):
            return f
    raise AssertionError("no matching field")


def test_loynes_formula_examples():
    model = parse_model("queue:emp:1=0.5,3=0.5:emp:1=0.5,2=0.5")
    f = _field_with_increments(model, [2, -1, 1])
    assert [loynes_value(model, f, n) for n in range(4)] == [0, 2, 2, 2]
    wide = parse_model("queue:emp:1=0.5,4=0.5:emp:1=0.5,2=0.5")
    g = _field_with_increments(wide, [-1, 3])
    assert [loynes_value(wide, g, n) for n in range(3)] == [0, 0, 2]
    with pytest.raises(UsageError):
        loynes_value(model, f, -1)


def test_loynes_matches_forward_paths():
    for seed in range(20):
        f = NoiseField(seed, "common")
        seq = LoynesSequence(CRITICAL, f)
        L = seq.values(300)
        for n in (1, 7, 50, 300):
            x = 0
            for t in range(-n, 0):
                x = advance(CRITICAL, f, t, x)
            assert x == L[n]


def test_preconditions():
    with pytest.raises(UsageError):
        loynes_value(parse_model("renewal:geo:0.5"), NoiseField(1, "common"), 3)
    with pytest.raises(UsageError):
        sample_taboo_pp(CRITICAL, NoiseField(1, "totally_independent"), 10, 100)
    with pytest.raises(UsageError):
        sample_taboo_pp(parse_model("lazyrw"), NoiseField(1, "common"), 10, 100)
    with pytest.raises(UsageError):
        sample_potential_pp(CRITICAL, NoiseField(1, "common"), 10, 100, strategy="ternary")
    with pytest.raises(UsageError):
        sample_taboo_pp(CRITICAL, NoiseField(1, "common"), -1, 100)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32), spec=st.sampled_from(["queue:geo:0.2:geo:0.2", "queue:poi:3:geo:0.2", "reflectedrw"]))
def test_loynes_nondecreasing_and_flags(seed, spec):
    model = parse_model(spec)
    seq = LoynesSequence(model, NoiseField(seed, "common"))
    L = seq.values(2000)
    assert L[0] == 0 and np.all(np.diff(L) >= 0)
    if spec.startswith("queue"):
        # the workload taboo flag is a strict record
        assert np.array_equal(seq.flags(2000)[1:], L[1:] > L[:-1])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32), spec=st.sampled_from(["queue:geo:0.2:geo:0.2", "queue:geo:0.3:geo:0.2", "reflectedrw"]))
def test_generic_sweep_equals_fast_path(seed, spec):
    model = parse_model(spec)
    f = NoiseField(seed, "common")
    a = LoynesSequence(model, f)
    b = LoynesSequence(model, f, generic=True)
    assert np.array_equal(a.values(1500), b.values(1500))
    assert np.array_equal(a.flags(1500), b.flags(1500))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32), K=st.integers(0, 40), spec=st.sampled_from(["queue:geo:0.2:geo:0.2", "reflectedrw", "queue:poi:2:geo:0.4"]))
def test_samples_agree_with_bridge(seed, K, spec):
    model = parse_model(spec)
    f = NoiseField(seed, "common")
    tab = sample_taboo_pp(model, f, K, 2000)
    pot = sample_potential_pp(model, f, K, 2000)
    assert tab.depth_used == pot.depth_used
    bt, bp = taboo_and_potential(build_bridge(model, f, -tab.depth_used, 0), 0)
    assert tab.measure == bt.restrict(K)
    assert pot.measure == bp.restrict(K)
    assert tab.measure[0] == 1
    assert tab.measure.support == pot.measure.support
    assert all(c <= pot.measure[y] for y, c in tab.measure.items())


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32), K=st.integers(0, 60))
def test_workload_taboo_is_simple_and_records_are_ordered(seed, K):
    s = sample_potential_pp(CRITICAL, NoiseField(seed, "common"), K, 5000)
    t = sample_taboo_pp(CRITICAL, NoiseField(seed, "common"), K, 5000)
    assert t.measure.is_simple
    recs = s.records.records
    assert all(r.run >= 1 for r in recs)
    assert all(a.value < b.value and a.index < b.index for a, b in zip(recs, recs[1:]))
    assert recs[0].value == 0 and recs[0].index == 0
    if s.exact:
        assert s.records.terminal.value > K


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32), K=st.integers(0, 50), spec=st.sampled_from(["queue:geo:0.2:geo:0.2", "reflectedrw"]))
def test_exponential_search_is_equivalent(seed, K, spec):
    model = parse_model(spec)
    f = NoiseField(seed, "common")
    a = sample_potential_pp(model, f, K, 4000)
    b = sample_potential_pp(model, f, K, 4000, strategy="exponential_search")
    assert (a.measure, a.status, a.depth_used, a.records) == (b.measure, b.status, b.depth_used, b.records)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32), K=st.integers(0, 30))
def test_exactness_certificate(seed, K):
    f = NoiseField(seed, "common")
    for sampler in (sample_taboo_pp, sample_potential_pp):
        a = sampler(CRITICAL, f, K, 3000)
        if a.exact:
            assert sampler(CRITICAL, f, K, 6000).measure == a.measure


def test_stable_queue_top_atom_is_loynes_limit():
    for seed in range(50):
        f = NoiseField(seed, "common")
        t = sample_taboo_pp(STABLE, f, 10**6, 20_000)
        # direct iteration backward until the stationary workload stops changing
        x_inf = LoynesSequence(STABLE, f).values(20_000)[-1]
        assert max(t.measure) == x_inf


def test_censored_status_and_json():
    f = NoiseField(3, "common")
    s = sample_potential_pp(CRITICAL, f, 10**6, 50)
    assert s.status == CENSORED and s.depth_used == 50
    d = json.loads(s.to_json())
    assert set(d) == {"atoms", "status", "depth_used", "records"}
    assert sum(a["count"] for a in d["atoms"]) == 51
    e = sample_taboo_pp(CRITICAL, f, 0, 10_000)
    assert e.status == EXACT
    measure, status = e
    assert status == EXACT and measure[0] == 1


def test_potential_counts_include_depth_zero():
    for seed in range(30):
        s = sample_potential_pp(CRITICAL, NoiseField(seed, "common"), 30, 5000)
        if s.exact:
            assert s.measure.mass == s.depth_used  # every depth below the terminal record lands in [0, K]


def test_gap_stats():
    g = backward_gap_stats(STABLE, NoiseField(1, "common"), 10**6, 20_000)
    assert g.censored  # records stop once the stationary workload is reached
    assert len(g.gaps) < 200
    c = backward_gap_stats(CRITICAL, NoiseField(2, "common"), 5, 10**6)
    assert len(c.gaps) == 5 and not c.censored
    # a deterministic upward chain creates a record at every depth
    up = parse_model("queue:emp:2=1:emp:1=1")
    u = backward_gap_stats(up, NoiseField(1, "common"), 20, 100)
    assert list(u.gaps) == [1] * 20


def test_gap_mean_grows_with_cap():
    small, large = [], []
    for seed in range(100):
        f = NoiseField(seed, "common")
        flags = LoynesSequence(CRITICAL, f).flags(10**6)[1:]
        idx = np.flatnonzero(flags) + 1
        gaps = np.diff(np.concatenate([[0], idx]))
        small.extend(gaps[np.cumsum(gaps) <= 10**4])
        large.extend(gaps)
    assert np.mean(large) > np.mean(small)
