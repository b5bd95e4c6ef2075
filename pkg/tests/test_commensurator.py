import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from l1flow.commensurator import (
    HALF_LINE,
    ChargeDivergence,
    TailSet,
    TailedTranslation,
    ambient_index,
    charge_index,
    charge_index_by_sets,
    comm_compose,
    comm_equivalent,
    comm_restrict,
    disagreement_set,
    index_value,
    random_ambient,
    random_cofinite,
    random_tailed,
)
from l1flow.exactnum import Interval, IntervalSet, Q

seeds = st.integers(0, 10 ** 6)


def half_line_swap() -> TailedTranslation:
    return TailedTranslation(Q(2), ((Interval(Q(0), Q(1)), Q(1)), (Interval(Q(1), Q(2)), Q(-1))), None, Q(0))


def compose_oracle(T, S, x):
    y = S.apply(x)
    return None if y is None else T.apply(y)


def test_shifts_compose():
    U = comm_compose(TailedTranslation.shift(1), TailedTranslation.shift(2))
    assert U.domain() == HALF_LINE
    assert all(U.apply(Q(k)) == Q(k + 3) for k in range(10))
    assert index_value(U) == 3


def test_composition_against_grid():
    T, S = half_line_swap(), TailedTranslation.shift(1)
    U = comm_compose(T, S)
    assert U.is_valid()
    for k in range(0, 6000):
        x = Q(Fraction(k, 1000))
        assert U.apply(x) == compose_oracle(T, S, x)
    # the swap only touches [0,2), so after the shift [0,1) lands in [1,2) and goes back to [0,1)
    assert U.apply(Q("1/2")) == Q("1/2")
    assert U.apply(Q("3/2")) == Q("5/2")


def test_inverse_gives_identity_on_range():
    T = TailedTranslation.shift(1)
    I = comm_compose(T, T.inverse())
    assert I.domain() == T.range()
    assert all(I.apply(Q(Fraction(k, 7))) == Q(Fraction(k, 7)) for k in range(7, 70))


def test_index_examples():
    assert index_value(TailedTranslation.shift(1)) == 1
    assert index_value(half_line_swap()) == 0
    restricted = comm_restrict(TailedTranslation.shift(1), TailSet.half_line(2))
    assert index_value(restricted) == 1
    holes = HALF_LINE - TailSet(IntervalSet.span(4, 6))
    assert index_value(comm_restrict(TailedTranslation.shift(1), holes)) == 1
    assert index_value(comm_restrict(TailedTranslation.identity(), TailSet.half_line(3))) == 0


def test_equivalence_examples():
    T = TailedTranslation.shift(1)
    modified = TailedTranslation(Q(5), ((Interval(Q(0), Q(5)), Q(0)),), None, Q(1))
    assert comm_equivalent(T, modified)
    assert not comm_equivalent(T, TailedTranslation.shift(2))
    W = comm_compose(T, half_line_swap())
    assert comm_equivalent(T, W)
    D = disagreement_set(T, W)
    assert D.is_bounded() and D.measure() == 2


def test_charge_examples():
    assert charge_index(TailedTranslation.identity(total=True)) == 0
    swap = TailedTranslation(Q(1), ((Interval(Q(-1), Q(0)), Q(1)), (Interval(Q(0), Q(1)), Q(-1))), Q(0), Q(0))
    assert charge_index(swap) == 0 == charge_index_by_sets(swap)
    shift = TailedTranslation(Q(0), (), Q("1/2"), Q("1/2"))
    assert charge_index(shift) == Q("1/2") == charge_index_by_sets(shift)
    with pytest.raises(ChargeDivergence):
        charge_index(TailedTranslation(Q(0), (), Q(0), Q(1)))


@given(seeds)
def test_random_maps_are_valid(seed):
    rng = random.Random(seed)
    assert random_tailed(rng).is_valid()
    assert random_tailed(rng, bijective=True).is_valid()


@given(seeds)
def test_index_is_a_homomorphism(seed):
    rng = random.Random(seed)
    T, S = random_tailed(rng), random_tailed(rng)
    assert index_value(comm_compose(T, S)) == index_value(T) + index_value(S)


@given(seeds)
def test_composition_pointwise(seed):
    rng = random.Random(seed)
    T, S = random_tailed(rng), random_tailed(rng)
    U = comm_compose(T, S)
    for k in range(-40, 120):
        x = Q(Fraction(k, 8)) + Q(Fraction(1, 97))
        assert U.apply(x) == compose_oracle(T, S, x)


@given(seeds)
def test_inverse_negates_index(seed):
    T = random_tailed(random.Random(seed))
    assert index_value(T.inverse()) == -index_value(T)


@given(seeds)
def test_restriction_preserves_index(seed):
    rng = random.Random(seed)
    T = random_tailed(rng)
    A = random_cofinite(rng, T)
    if A.commensurate_with_half_line():
        assert index_value(comm_restrict(T, A)) == index_value(T)


@given(seeds)
def test_ambient_formula(seed):
    rng = random.Random(seed)
    T = random_tailed(rng)
    assert ambient_index(T, random_ambient(rng, T)) == index_value(T)


@given(seeds)
def test_equivalent_maps_share_index(seed):
    rng = random.Random(seed)
    T = random_tailed(rng)
    W = comm_compose(T, half_line_swap()) if T.domain().issubset(HALF_LINE) else T
    if comm_equivalent(T, W):
        assert index_value(T) == index_value(W)


@given(seeds)
def test_charge_matches_half_line_index(seed):
    T = random_tailed(random.Random(seed), bijective=True)
    assert charge_index(T) == charge_index_by_sets(T) == index_value(comm_restrict(T, HALF_LINE))


@given(seeds)
def test_json_round_trip(seed):
    T = random_tailed(random.Random(seed))
    assert TailedTranslation.from_json(T.to_json()) == T
