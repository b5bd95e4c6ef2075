import random

import pytest

from l1flow.castles import (
    build_thm61,
    castle_support,
    castle_validate,
    castle_validate_cells,
    displayed_sets_match,
    level_tessellation,
    max_abs_shift,
    rank_one_diagnostic,
    sign_alternation_stats,
    sign_alternations,
    translation_conditions,
    vec_phi,
)
from l1flow.exactnum import IntervalSet, Q, UNIT
from l1flow.flow import FlowPoint, RectSet, Tessellation, build_cross_section, mu
from l1flow.fullgroup import PartialMap, cell_rotation, flow_element

LEVELS = 4


@pytest.fixture(scope="module")
def state():
    return build_thm61(LEVELS)


def rect(*args):
    return RectSet.rect(*(Q(a) for a in args))


def test_single_shift_castle():
    phi = PartialMap({Q("1/2"): rect(0, "1/4", 0, "1/4")})
    report = castle_validate(phi)
    assert report.ok and report.height == 2
    assert report.basis == rect(0, "1/4", 0, "1/4")
    assert report.ceiling == rect(0, "1/4", "1/2", "3/4")
    assert vec_phi(phi) == phi


def test_two_cycle_is_not_a_castle():
    A = rect(0, "1/4", 0, "1/4")
    phi = PartialMap({Q("1/2"): A, Q("-1/2"): rect(0, "1/4", "1/2", "3/4")})
    report = castle_validate(phi)
    assert not report.ok and not report.basis


def test_vec_phi_matches_iteration():
    phi = PartialMap({Q("1/4"): rect(0, "1/2", 0, "1/2"), Q("1/8"): rect(0, "1/2", "1/2", "5/8")})
    top = vec_phi(phi)
    rng = random.Random(4)
    for _ in range(1000):
        x = FlowPoint(Q(rng.randrange(500)) / 1000, Q(rng.randrange(250)) / 1000)
        y = x
        while phi.apply(y) is not None:
            y = phi.apply(y)
        assert top.apply(x) == y


def test_phi_two_is_a_castle(state):
    lv = state.level(2)
    assert castle_validate(lv.phi).ok
    assert castle_validate(lv.psi).ok


def test_castles_per_cell(state):
    for n in range(1, LEVELS + 1):
        tess = level_tessellation(state, n)
        assert castle_validate_cells(state.level(n).phi, tess).ok
        assert castle_validate_cells(state.level(n).psi, tess).ok


def test_cocycle_bounds(state):
    for n in range(1, LEVELS + 1):
        assert max_abs_shift(state.level(n).phi) <= 3
    assert max_abs_shift(state.S) <= 4


def test_support_halving(state):
    for n in range(1, LEVELS):
        a = mu(castle_support(state.level(n).psi), state.params)
        b = mu(castle_support(state.level(n + 1).psi), state.params)
        assert b / a == Q("1/2")


def test_phi_extends_previous_level(state):
    for n in range(1, LEVELS):
        small, big = state.level(n).phi, state.level(n + 1).phi
        assert big.restrict(small.domain()) == small


def test_supports_split_Y(state):
    for n in range(1, LEVELS + 1):
        a, b = castle_support(state.level(n).phi), castle_support(state.level(n).psi)
        assert a.isdisjoint(b)
        assert (a | b) == state.Y


def test_translation_conditions(state):
    for n in range(1, LEVELS + 1):
        assert translation_conditions(state, n) == []
        assert displayed_sets_match(state, n) == []


def test_first_level_translation(state):
    # iota_1(c) = c + gap - 1/2, so c + t lands at c + gap - 3/2 + t
    top = vec_phi(state.level(1).phi)
    assert set(top.rules) == {state.params.roof - Q("3/2")} == {Q(1)}


def test_S_is_a_bijection_with_zero_index(state):
    assert state.S.is_valid()
    assert state.S.index() == 0


@pytest.mark.parametrize("n, share", [(1, "1/2"), (2, "3/4"), (3, "7/8")])
def test_rank_one_coverage(state, n, share):
    assert rank_one_diagnostic(state, n).proportions == {Q(share)}


def test_coverage_pieces_disjoint(state):
    pieces = rank_one_diagnostic(state, 3).pieces
    ivs = sorted((iv for iv, *_ in pieces), key=lambda iv: iv.lo)
    assert all(a.hi <= b.lo for a, b in zip(ivs, ivs[1:]))
    assert IntervalSet(ivs) == state.level(3).base


def test_flow_never_alternates():
    stats = sign_alternation_stats(flow_element(Q("1/3")), samples=50, horizon=64)
    assert stats.alternating == 0


def test_cell_rotation_alternates():
    tess = Tessellation(build_cross_section(UNIT))
    T = cell_rotation(tess, Q("1/3"))
    x = FlowPoint(Q("1/7"), Q("1/10"))
    shifts = []
    for _ in range(6):
        shifts.append(T.cocycle(x))
        x = T.apply(x)
    assert [s.sign() for s in shifts] == [1, 1, -1, 1, 1, -1]
    # a point in the middle third swings back and forth past its start
    mid = FlowPoint(Q("1/7"), Q("1/2"))
    assert sign_alternations(T, mid, 30) >= 9
    assert sign_alternations(T, mid, 90) >= 3 * sign_alternations(T, mid, 30) - 1


def test_snapshot_round_trip(state):
    doc = state.to_json()
    assert doc["levels"] == LEVELS
    from l1flow.fullgroup import StepElement
    assert StepElement.from_json(doc["S"]) == state.S
