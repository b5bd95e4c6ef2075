import random
import warnings

import pytest
from hypothesis import given, settings, strategies as st

from l1flow.approx import (
    GridTooCoarse,
    PeriodicApproxParams,
    approx_conservative_by_periodic,
    conservative_templates,
    copious_sets,
    h_decompose,
    kernel_approximation,
    monotone_decompose,
    monotone_templates,
    periodic_from_monotone,
    periodic_from_monotone_auto,
    sparse_section,
    sup_deviation,
)
from l1flow.exactnum import ALPHA, IntervalSet, Q, UNIT
from l1flow.flow import (
    RectSet,
    StepFunction,
    Tessellation,
    build_cross_section,
    fiber_measure_batch,
    fiber_profile,
    mu,
    refine_profiles,
)
from l1flow.fullgroup import (
    StepElement,
    arrival_departure,
    cell_rotation,
    cocycle_distance,
    flow_element,
    lane_element,
    periodic_part,
    random_element,
    swap_element,
)
from l1flow.verification import benchmark_params
from conftest import sample_points

IDENTITY = StepElement.identity()
TEMPLATES = dict(monotone_templates())
CONSERVATIVE = dict(conservative_templates())


def quiet(fn, *args, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fn(*args, **kw)


def is_periodic(P, cap=256):
    return not quiet(periodic_part, P, cap).residual


def grid_valued(S, step):
    return all((t / step).is_rational() and (t / step).a.denominator == 1 for t in S.rules)


# --------------------------------------------------------------------------- grid-valued approximation


def test_grid_valued_input_is_unchanged():
    T = lane_element([(IntervalSet.span(0, Q("1/2")), Q("3/16"))])
    assert h_decompose(T, Q("1/8"), Q("1/16")) == T
    assert h_decompose(IDENTITY, Q("1/8"), Q("1/16")) == IDENTITY


def test_flow_by_alpha_on_the_sixteenth_grid():
    T = flow_element(ALPHA)
    S, rep = h_decompose(T, Q("1/8"), Q("1/16"), report=True)
    assert S.is_valid()
    assert grid_valued(S, Q("1/16"))
    dev = sup_deviation(T, S)
    assert dev == rep.deviation < Q("1/8")
    assert dev == Q("23/16") - ALPHA - 1  # frozen from the exact audit
    # pointwise: no sample sees a larger deviation
    for x in sample_points(random.Random(2), 2000):
        assert abs(T.cocycle(x) - S.cocycle(x)) <= dev


@settings(max_examples=25)
@given(st.integers(0, 10 ** 6))
def test_grid_approximation_of_random_elements(seed):
    T = flow_element(ALPHA / 4).compose(random_element(random.Random(seed)))
    try:
        S = h_decompose(T, Q("1/4"), Q("1/16"))
    except GridTooCoarse:
        return
    assert S.is_valid()
    assert grid_valued(S, Q("1/16"))
    assert sup_deviation(T, S) < Q("1/4")


def test_grid_must_be_finer_than_epsilon():
    with pytest.raises(ValueError):
        h_decompose(flow_element(ALPHA), Q("1/16"), Q("1/8"))


# --------------------------------------------------------------------------- conservative branch


def test_periodic_input_is_returned():
    T = CONSERVATIVE["cell-rotation"]
    P, rep = approx_conservative_by_periodic(T, Q("1/4"))
    assert P == T and rep.error == 0


def test_identity_is_returned():
    P, rep = approx_conservative_by_periodic(IDENTITY, Q("1/4"))
    assert P == IDENTITY and rep.error == 0


@pytest.mark.parametrize("name", ["rational-rotation", "irrational-rotation", "swap", "three-cycle"])
def test_conservative_templates(name):
    T = CONSERVATIVE[name]
    P, rep = approx_conservative_by_periodic(T, Q("1/4"))
    assert rep.error == cocycle_distance(T, P) < Q("1/4")
    assert P.is_valid() and is_periodic(P)
    assert P.support.issubset(T.support)
    assert P.index() == 0


@pytest.mark.slow
def test_long_rotation():
    T = CONSERVATIVE["long-rotation"]
    P, rep = approx_conservative_by_periodic(T, Q("1/4"))
    assert rep.error < Q("1/4") and is_periodic(P)


# --------------------------------------------------------------------------- monotone decomposition


def test_monotone_input_splits_trivially():
    T = TEMPLATES["halves"]
    split = monotone_decompose(T)
    assert split.periodic == IDENTITY
    assert split.induced == T
    assert not split.residual


def test_identity_splits_trivially():
    split = monotone_decompose(IDENTITY)
    assert split.periodic == IDENTITY and split.induced == IDENTITY


def test_monotone_times_swap():
    # swap two strips inside the forward lane: displacements alternate 5/4 and 3/4
    L = TEMPLATES["halves"]
    W = swap_element(RectSet.rect(0, 1, 0, Q("1/4")), Q("1/4"))
    T = L.compose(W)
    split = monotone_decompose(T)
    assert not split.residual
    assert split.periodic.compose(split.induced) == T
    assert is_periodic(split.periodic)
    assert split.index_induced == split.index_T == T.index()


def test_swap_across_lanes_leaves_a_periodic_residual():
    # crossing lanes makes T^2 the identity on the swapped strips
    L = TEMPLATES["halves"]
    W = swap_element(RectSet.rect(0, 1, 0, Q("1/4")), Q("1/2"))
    T = L.compose(W)
    split = monotone_decompose(T)
    strips = IntervalSet.span(0, Q("1/4")) | IntervalSet.span(Q("1/2"), Q("3/4"))
    assert split.residual == RectSet.product(UNIT, strips)
    assert set(T.power(2).restrict(split.residual).rules) == {0}


# --------------------------------------------------------------------------- copious sets


@pytest.fixture(scope="module")
def halves_setup():
    T = TEMPLATES["halves"]
    tess = Tessellation(sparse_section(2, T.params))
    ad = quiet(arrival_departure, T, tess)
    return T, tess, ad


def test_full_target_takes_everything(halves_setup):
    T, tess, ad = halves_setup
    xi = fiber_measure_batch(ad.arrival_forward, tess)
    assert xi == fiber_measure_batch(ad.arrival_backward, tess)
    cop = copious_sets(T, tess, xi, ad)
    assert cop.arrival_forward == ad.arrival_forward
    assert cop.arrival_backward == ad.arrival_backward
    assert all(a == 0 for a, _ in cop.saturation_defect.values())
    assert cop.saturation_ok()


def test_zero_target_is_empty(halves_setup):
    T, tess, ad = halves_setup
    cop = copious_sets(T, tess, 0, ad)
    assert not cop.arrival and not cop.departure


def brute_force_cutoff(levels, target):
    """Scan every level and every interval endpoint for the cutoff."""
    for nu in range(len(levels)):
        above = sum((L.measure() for L in levels[nu + 1:]), Q(0))
        if above < target <= above + levels[nu].measure():
            acc = above
            for iv in levels[nu]:
                if acc + iv.length >= target:
                    return nu, iv.lo + (target - acc)
                acc = acc + iv.length
    raise AssertionError("no cutoff")


def test_cutoffs_match_brute_force(halves_setup):
    T, tess, ad = halves_setup
    assert ad.max_level() >= 2
    X = ad.monotone.forward
    half = StepFunction([(iv, v / 2) for iv, v in fiber_measure_batch(ad.arrival_forward, tess).pieces])
    cop = copious_sets(T, tess, half, ad)
    levels = [ad.level(n) & X for n in range(ad.max_level() + 1)]
    profile = refine_profiles(*[fiber_profile(L, tess) for L in levels])
    chosen = refine_profiles(fiber_profile(cop.arrival_forward, tess))
    for iv, offs in profile:
        c = (iv.lo + iv.hi) / 2
        target = half(c)
        nu, r = brute_force_cutoff(offs, target)
        assert cop.nu_forward(c) == nu and cop.r_forward(c) == r
        sel = next(o[0] for jv, o in chosen if jv.lo <= c < jv.hi)
        assert sel.measure() == target
        # levels above nu are fully taken, level nu partially, levels below not at all
        for n, L in enumerate(offs):
            if n > nu:
                assert L.issubset(sel)
            elif n < nu:
                assert L.isdisjoint(sel)


# --------------------------------------------------------------------------- single-section construction


def test_empty_support_gives_identity():
    tess = Tessellation(build_cross_section(UNIT))
    rep = periodic_from_monotone(IDENTITY, tess, PeriodicApproxParams(2, Q("3/2"), 1))
    assert rep.P == IDENTITY and rep.measured_error == 0 and rep.certified_bound == 0


@pytest.mark.parametrize("name", ["halves", "two-forward", "return-lane"])
def test_benchmark_bound(name):
    T = TEMPLATES[name]
    tess, prm = benchmark_params(T)
    assert prm.beta == 3 * prm.gamma / 2
    rep = periodic_from_monotone(T, tess, prm)
    assert rep.ok, {k: v for k, v in rep.checks.items() if not v}
    assert rep.integrals["departing_arcs_U"] == rep.integrals["departing_arcs_T"]
    assert rep.integrals["dist_T_U"] <= 2 * rep.integrals["departing_arcs_T"]
    assert rep.integrals["dist_U_V"] <= 2 * rep.integrals["departing_arcs_U"]
    assert rep.measured_error == cocycle_distance(T, rep.P) <= rep.certified_bound
    assert is_periodic(rep.P) and rep.P.support.issubset(T.support)


# --------------------------------------------------------------------------- auto driver and kernel pipeline


def test_auto_driver_on_empty_support():
    P, rep = periodic_from_monotone_auto(IDENTITY, Q("1/4"))
    assert P == IDENTITY and rep["coverage"] == 1


def test_auto_driver_single_band():
    T = TEMPLATES["halves"]
    P, rep = periodic_from_monotone_auto(T, Q("1/4"))
    assert len(rep["bands"]) == 1 and rep["bands"][0].handled
    assert all(rep["checks"].values())
    assert rep["measured_error"] <= rep["certified_bound"]
    assert rep["measured_error"] < Q("1/4")


def test_auto_driver_two_lane_template():
    T = TEMPLATES["two-forward"]
    P, rep = periodic_from_monotone_auto(T, Q("1/2"))
    assert cocycle_distance(T, P) == rep["measured_error"] < Q("1/2")
    assert rep["coverage"] >= Q("99/100")
    assert is_periodic(P)


def test_auto_driver_rejects_nonzero_index():
    with pytest.raises(ValueError):
        periodic_from_monotone_auto(flow_element(Q("1/2")), Q("1/4"))


@pytest.mark.parametrize("name", ["halves", "swap"])
def test_kernel_pipeline(name):
    T = TEMPLATES.get(name) or CONSERVATIVE[name]
    out = kernel_approximation(T, Q("1/4"))
    assert out.error < Q("1/4") and out.coverage == 1
    assert is_periodic(out.P) and out.P.index() == 0


def test_kernel_pipeline_mixed():
    # a dissipative lane pair next to a conservative swap on disjoint heights
    L = lane_element([(IntervalSet.span(0, Q("1/4")), 1), (IntervalSet.span(Q("1/4"), Q("1/2")), -1)])
    W = swap_element(RectSet.rect(0, Q("1/4"), Q("1/2"), Q("5/8")), Q("1/4"))
    T = L.compose(W)
    out = kernel_approximation(T, Q("1/4"))
    assert out.error < Q("1/4") and out.coverage >= Q("99/100")
    assert set(out.branches) >= {"conservative", "dissipative"}
