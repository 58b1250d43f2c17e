from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from doeblin.distributions import make_distribution
from doeblin.errors import UsageError
from doeblin.models import advance, advance_array, advance_column, parse_model
from doeblin.noise import NoiseField

MODELS = ["renewal:geo:0.5", "renewal:zeta:0.75", "lazyrw", "reflectedrw", "queue:geo:0.2:geo:0.2", "queue:geo:0.3:geo:0.2"]
MONOTONE = ["reflectedrw", "queue:geo:0.2:geo:0.2", "queue:poi:2:geo:0.3", "lazyrw"]


def test_renewal_examples():
    m = parse_model("renewal:geo:0.5")
    assert m.step(3, (0.99,)) == 2
    d = make_distribution("geo:0.5")
    u = next(u for u in np.linspace(0, 1, 10_001)[:-1] if d.quantile(u) == 4)
    assert m.step(0, (u,)) == 3


def test_workload_deterministic_example():
    m = parse_model("queue:emp:2=1:emp:3=1")
    assert m.step(0, (0.1, 0.9)) == 0
    assert m.step(5, (0.5, 0.5)) == 4
    assert m.width == 2


def test_arity_mismatch():
    with pytest.raises(UsageError):
        parse_model("queue:geo:0.2:geo:0.2").step(0, (0.5,))
    with pytest.raises(UsageError):
        parse_model("reflectedrw").step(0, (0.5, 0.5))


@pytest.mark.parametrize("spec", ["renewal", "queue:geo:0.2", "walk", "renewal:geo:2"])
def test_bad_model_specs(spec):
    with pytest.raises(UsageError):
        parse_model(spec)


@settings(max_examples=300, deadline=None)
@given(i=st.integers(1, 10**9), u=st.floats(0, 1, exclude_max=True))
def test_renewal_descent(i, u):
    assert parse_model("renewal:zeta:0.75").step(i, (u,)) == i - 1


@pytest.mark.parametrize("spec", ["reflectedrw", "queue:geo:0.2:geo:0.2", "queue:poi:2:geo:0.3", "lazyrw"])
def test_monotone_spot_check(spec):
    m = parse_model(spec)
    rng = np.random.default_rng(12)
    n = 100_000
    x = rng.integers(0, 50, n)
    y = x + rng.integers(0, 50, n)
    u = rng.random((n, m.width))
    assert np.all(m.step_array(x, u) <= m.step_array(y, u))


def _empirical_check(m, x, n=1_000_000, seed=0):
    rng = np.random.default_rng(seed)
    u = rng.random((n, m.width))
    y = m.step_array(np.full(n, x), u)
    row = m.transition_row(x)
    vals, counts = np.unique(y, return_counts=True)
    emp = dict(zip(vals.tolist(), counts.tolist()))
    assert set(emp) <= set(row)
    # states with tiny expected counts are pooled into one rare bin
    rare_p = rare_c = 0
    for state, p in row.items():
        if n * p < 25:
            rare_p += p
            rare_c += emp.get(state, 0)
            continue
        se = np.sqrt(p * (1 - p) / n)
        assert abs(emp.get(state, 0) / n - p) <= 4 * se, (x, state)
    if rare_p > 0:
        assert abs(rare_c / n - rare_p) <= 4 * np.sqrt(rare_p / n) + 1 / n


@pytest.mark.parametrize("spec", ["renewal:geo:0.5", "lazyrw", "reflectedrw", "queue:geo:0.2:geo:0.2"])
@pytest.mark.parametrize("x", [0, 1, 5, 10])
def test_transition_frequencies(spec, x):
    _empirical_check(parse_model(spec), x, seed=x)


def test_transition_rows_sum_to_one():
    for spec in MODELS:
        m = parse_model(spec)
        for x in range(4):
            total = sum(m.transition_row(x).values())
            if "zeta" in spec and x == 0:
                assert 0.999 < total <= 1.0  # heavy tail cut at 2**20
            else:
                assert total == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("spec", MODELS)
@pytest.mark.parametrize("mode", ["totally_independent", "common"])
def test_vectorized_advance_matches_scalar(spec, mode):
    m = parse_model(spec)
    f = NoiseField(3, mode)
    xs = list(range(0, 30, 3))
    for t in range(-5, 5):
        scalar = [advance(m, f, t, x) for x in xs]
        assert advance_column(m, f, t, xs) == scalar
        assert advance_array(m, f, t, np.array(xs)).tolist() == scalar
        assert advance_array(m, f, np.full(len(xs), t), np.array(xs)).tolist() == scalar


def test_maximal_shift_translation():
    m = parse_model("lazyrw")
    f = NoiseField(4, "maximal_shift")
    for t in range(50):
        d = advance(m, f, t, 0)
        assert all(advance(m, f, t, x) == x + d for x in (-7, 3, 1000))


def test_maximal_shift_needs_translation_invariance():
    with pytest.raises(UsageError):
        advance(parse_model("reflectedrw"), NoiseField(1, "maximal_shift"), 0, 0)


def test_renewal_skips_noise_away_from_zero():
    m = parse_model("renewal:geo:0.5")
    assert not m.uses_noise(3) and m.uses_noise(0)
