from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from doeblin.errors import UsageError
from doeblin.measures import EMPTY, CountingMeasure, iterate_dynamics, potential_step, taboo_step
from doeblin.models import advance, parse_model
from doeblin.noise import NoiseField

RENEWAL = parse_model("renewal:geo:0.5")
measures = st.dictionaries(st.integers(0, 40), st.integers(1, 9), max_size=8).map(CountingMeasure)


def _seed_sending_zero_to(model, target, t=0):
    for seed in range(10_000):
        f = NoiseField(seed)
        if advance(model, f, t, 0) == target:
            return f
    raise AssertionError("no seed found")


def test_counting_measure_basics():
    m = CountingMeasure({3: 2, 1: 1, 5: 0})
    assert list(m) == [1, 3]
    assert m.mass == 3 and not m.is_simple
    assert m == {1: 1, 3: 2, 7: 0}
    assert m.restrict(2) == {1: 1}
    assert m.interval(1, 4) == 2  # open interval drops the endpoint 1
    assert CountingMeasure.from_json(m.to_json()) == m
    assert m.to_csv() == "state,count\n1,1\n3,2\n"
    assert (m - CountingMeasure({3: 2})) == {1: 1}
    with pytest.raises(UsageError):
        CountingMeasure({1: -1})


def test_empty_measure_maps_to_dirac():
    f = NoiseField(1)
    assert taboo_step(EMPTY, RENEWAL, f, 0) == {0: 1}
    assert potential_step(EMPTY, RENEWAL, f, 0) == {0: 1}


def test_renewal_examples():
    f = NoiseField(1)
    assert taboo_step({1: 4}, RENEWAL, f, 0) == {0: 1}
    assert potential_step({1: 4}, RENEWAL, f, 0) == {0: 5}
    g = _seed_sending_zero_to(RENEWAL, 5)
    assert taboo_step({0: 1, 3: 2}, RENEWAL, g, 0) == {0: 1, 2: 2, 5: 1}


def test_iterate_zero_steps_and_bad_kind():
    m = CountingMeasure({2: 3})
    assert iterate_dynamics(m, "taboo", RENEWAL, NoiseField(1), 0, 0) == m
    with pytest.raises(UsageError):
        iterate_dynamics(m, "other", RENEWAL, NoiseField(1), 0, 1)
    with pytest.raises(UsageError):
        iterate_dynamics(m, "taboo", RENEWAL, NoiseField(1), 0, -1)


def test_potential_from_empty_with_unit_jumps():
    model = parse_model("renewal:emp:1=1")
    assert iterate_dynamics(EMPTY, "potential", model, NoiseField(3), -7, 7) == {0: 7}
    assert iterate_dynamics(EMPTY, "taboo", model, NoiseField(3), -7, 7) == {0: 1}


@settings(max_examples=200, deadline=None)
@given(m=measures, seed=st.integers(0, 2**32), t=st.integers(-1000, 1000), spec=st.sampled_from(["renewal:geo:0.5", "queue:geo:0.2:geo:0.2", "reflectedrw"]))
def test_mass_balance(m, seed, t, spec):
    model = parse_model(spec)
    for mode in ("totally_independent", "common"):
        f = NoiseField(seed, mode)
        into_s = sum(c for x, c in m.items() if advance(model, f, t, x) == model.s_star)
        tab = taboo_step(m, model, f, t)
        pot = potential_step(m, model, f, t)
        assert tab.mass == m.mass + 1 - into_s
        assert tab[model.s_star] == 1
        assert pot.mass == m.mass + 1
        for y, c in tab.items():
            assert c <= pot[y]


@settings(max_examples=100, deadline=None)
@given(m=measures, seed=st.integers(0, 2**32), n=st.integers(1, 20))
def test_taboo_iteration_keeps_unit_at_reference(m, seed, n):
    for spec in ("renewal:zeta:0.75", "queue:geo:0.3:geo:0.2"):
        out = iterate_dynamics(m, "taboo", parse_model(spec), NoiseField(seed, "common"), 0, n)
        assert out[0] == 1


@settings(max_examples=100, deadline=None)
@given(m=measures, seed=st.integers(0, 2**32), shift=st.integers(1, 50))
def test_maximal_shift_commutes_with_translation(m, seed, shift):
    # lazyrw under maximal_shift moves all states by one common amount, so
    # pushing then translating equals translating then pushing (away from s*)
    model = parse_model("lazyrw")
    f = NoiseField(seed, "maximal_shift")
    moved = CountingMeasure({x + shift: c for x, c in m.items()})
    a = potential_step(moved, model, f, 5) - CountingMeasure({0: 1})
    b = potential_step(m, model, f, 5) - CountingMeasure({0: 1})
    assert a == CountingMeasure({x + shift: c for x, c in b.items()})


def test_dynamics_accepts_negative_states_for_walks_on_z():
    out = potential_step({-3: 2}, parse_model("lazyrw"), NoiseField(2, "maximal_shift"), 0)
    assert out.mass == 3


@settings(max_examples=100, deadline=None)
@given(m=st.dictionaries(st.integers(1, 40), st.integers(1, 9), max_size=8), k=st.integers(1, 30), seed=st.integers(0, 2**32))
def test_renewal_update_commutes_with_shift_of_positive_states(m, k, seed):
    # away from s* the renewal chain is a pure descent, so relabeling x -> x + k
    # (fixing s*) commutes with the update for measures supported on x >= 1
    f = NoiseField(seed)
    shift = lambda M: CountingMeasure({(x + k if x else 0): c for x, c in M.items()})
    m = CountingMeasure({x + 1: c for x, c in m.items()})  # keep states >= 2 so nothing hits s*
    for update in (taboo_step, potential_step):
        assert update(shift(m), RENEWAL, f, 0) == shift(update(m, RENEWAL, f, 0))
