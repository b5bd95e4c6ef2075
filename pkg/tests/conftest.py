import random
from fractions import Fraction

import pytest
from hypothesis import HealthCheck, settings, strategies as st

from l1flow.exactnum import Interval, IntervalSet, Q, QuadScalar
from l1flow.flow import FlowParams, FlowPoint, RectSet
from l1flow.fullgroup import random_element

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

small_fractions = st.fractions(min_value=-20, max_value=20, max_denominator=24)
scalars = st.builds(QuadScalar, small_fractions, small_fractions)
unit_points = st.integers(0, 47).map(lambda k: Q(Fraction(k, 48)))


@st.composite
def interval_sets(draw, lo=0, hi=1, denom=24, max_parts=4):
    cuts = sorted(set(draw(st.lists(st.integers(lo * denom, hi * denom), max_size=2 * max_parts))))
    parts = [Interval(Q(Fraction(a, denom)), Q(Fraction(b, denom)))
             for a, b in zip(cuts[::2], cuts[1::2]) if a < b]
    return IntervalSet(parts)


@st.composite
def rect_sets(draw, roof=1, max_rects=3):
    parts = []
    for _ in range(draw(st.integers(0, max_rects))):
        a, b = sorted(draw(st.lists(st.integers(0, 16), min_size=2, max_size=2, unique=True)))
        u, v = sorted(draw(st.lists(st.integers(0, 8), min_size=2, max_size=2, unique=True)))
        parts.append(RectSet.rect(Fraction(a, 16), Fraction(b, 16), Q(roof) * Fraction(u, 8), Q(roof) * Fraction(v, 8)))
    out = RectSet.from_rects([])
    for r in parts:
        out = out | r
    return out


step_elements = st.integers(0, 10 ** 6).map(lambda seed: random_element(random.Random(seed)))


def sample_points(rng: random.Random, count: int, params: FlowParams = FlowParams(), denom: int = 997):
    """Exact sample points on a prime grid, away from the dyadic piece boundaries."""
    return [FlowPoint(Q(Fraction(rng.randrange(denom), denom)), params.roof * Fraction(rng.randrange(denom), denom))
            for _ in range(count)]


@pytest.fixture
def rng():
    return random.Random(20261017)
