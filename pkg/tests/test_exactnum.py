import math
from decimal import Decimal, getcontext
from fractions import Fraction

from hypothesis import given, strategies as st

from l1flow.exactnum import ALPHA, SQRT2, Interval, IntervalSet, Q, QuadScalar, UNIT, circle_translate
from conftest import interval_sets, scalars



def decimal_value(x: QuadScalar) -> Decimal:
    getcontext().prec = 80
    return Decimal(x.a.numerator) / Decimal(x.a.denominator) + \
        Decimal(x.b.numerator) / Decimal(x.b.denominator) * Decimal(2).sqrt()


def test_conjugate_product():
    assert (1 + SQRT2) * (1 - SQRT2) == -1


def test_sign_of_near_cancellation():
    assert (3 - 2 * SQRT2).sign() == 1
    assert (2 * SQRT2 - 3).sign() == -1


def test_floor_by_integer_squares():
    # largest n with n^2 <= 50
    assert (5 * SQRT2).floor() == math.isqrt(50) == 7
    assert (-5 * SQRT2).floor() == -8


def test_division_by_zero_scalar_raises():
    try:
        ONE_ = Q(1)
        ONE_ / Q(0)
    except ZeroDivisionError:
        return
    raise AssertionError("division by zero did not raise")


def test_canonical_storage():
    x = QuadScalar(Fraction(2, 4), Fraction(-6, 8))
    assert x.a == Fraction(1, 2) and x.b == Fraction(-3, 4)
    assert QuadScalar(1, 1) != QuadScalar(1, 0)


@given(scalars, scalars)
def test_ordering_matches_high_precision(x, y):
    diff = decimal_value(x) - decimal_value(y)
    expected = (diff > 0) - (diff < 0)
    assert (x > y) - (x < y) == expected


@given(scalars, scalars, scalars)
def test_field_laws(x, y, z):
    assert (x + y) * z == x * z + y * z
    assert x - x == 0
    if y != 0:
        assert (x / y) * y == x


@given(scalars)
def test_floor_brackets(x):
    f = x.floor()
    assert Q(f) <= x < Q(f) + 1
    assert x.ceil() - 1 < x <= Q(x.ceil())


def test_set_algebra_examples():
    assert IntervalSet.span(0, 1) - IntervalSet.span(Q("1/2"), 1) == IntervalSet.span(0, Q("1/2"))
    merged = IntervalSet.span(0, ALPHA) | IntervalSet.span(ALPHA, 1)
    assert merged.measure() == 1 and len(merged.parts) == 1
    canon = IntervalSet([Interval(Q(0), Q("1/3")), Interval(Q("1/3"), Q("1/2"))])
    assert canon == IntervalSet.span(0, Q("1/2")) and len(canon.parts) == 1


@given(interval_sets(), interval_sets())
def test_inclusion_exclusion(A, B):
    assert (A | B).measure() + (A & B).measure() == A.measure() + B.measure()


@given(interval_sets(), interval_sets())
def test_canonical_form(A, B):
    for S in (A | B, A & B, A - B):
        parts = S.parts
        assert all(p.lo < p.hi for p in parts)
        assert all(p.hi < q.lo for p, q in zip(parts, parts[1:]))


@given(interval_sets(), st.integers(0, 39))
def test_pointwise_membership_matches(A, k):
    x = Q(Fraction(k, 40))
    B = circle_translate(A, Q("1/3"))
    assert A.contains(x) == B.contains((x + Q("1/3")).frac())


def test_circle_translate_examples():
    assert circle_translate(IntervalSet.span(Q("3/4"), 1), Q("1/2")) == IntervalSet.span(Q("1/4"), Q("1/2"))
    assert circle_translate(UNIT, ALPHA) == UNIT
    # alpha + 1/2 < 1, so no split
    assert ALPHA + Q("1/2") < 1
    assert circle_translate(IntervalSet.span(0, Q("1/2")), ALPHA) == IntervalSet.span(ALPHA, ALPHA + Q("1/2"))


@given(interval_sets(), scalars)
def test_circle_translate_is_measure_preserving(A, t):
    B = circle_translate(A, t)
    assert B.measure() == A.measure()
    assert circle_translate(B, -t) == A


def test_json_round_trip():
    x = Q("-3/7") + Q("5/2") * SQRT2
    assert QuadScalar.from_json(x.to_json()) == x
    assert x.to_json() == {"a": "-3/7", "b": "5/2"}
