"""Exact arithmetic in Q(sqrt 2) and canonical half-open interval sets.

Every length, time and angle in the package is a :class:`QuadScalar`.  Values are
stored as ``(p + q*sqrt2) / d`` with integer ``p, q, d`` so that comparisons reduce
to a couple of integer squarings and never touch floating point.
"""
from __future__ import annotations

import math
import re
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Sequence, Union

SQRT2_FLOAT = math.sqrt(2.0)

Number = Union["QuadScalar", int, Fraction]


class QuadScalar:
    """The number ``a + b*sqrt(2)`` with rational ``a`` and ``b``."""

    __slots__ = ("_p", "_q", "_d", "_hash")

    def __init__(self, a: int | Fraction | str = 0, b: int | Fraction | str = 0):
        a = Fraction(a)
        b = Fraction(b)
        d = a.denominator * b.denominator // math.gcd(a.denominator, b.denominator)
        self._set(a.numerator * (d // a.denominator), b.numerator * (d // b.denominator), d)

    def _set(self, p: int, q: int, d: int) -> None:
        g = math.gcd(p, q, d)
        if g != 1:
            p //= g
            q //= g
            d //= g
        self._p, self._q, self._d = p, q, d
        self._hash = None

    @classmethod
    def _raw(cls, p: int, q: int, d: int) -> "QuadScalar":
        obj = cls.__new__(cls)
        if d < 0:
            p, q, d = -p, -q, -d
        obj._set(p, q, d)
        return obj

    @classmethod
    def coerce(cls, x: Number) -> "QuadScalar":
        if isinstance(x, QuadScalar):
            return x
        if isinstance(x, int):
            return cls._raw(x, 0, 1)
        if isinstance(x, Fraction):
            return cls._raw(x.numerator, 0, x.denominator)
        raise TypeError(f"cannot coerce {type(x).__name__} to QuadScalar")

    # components
    @property
    def a(self) -> Fraction:
        return Fraction(self._p, self._d)

    @property
    def b(self) -> Fraction:
        return Fraction(self._q, self._d)

    def is_rational(self) -> bool:
        return self._q == 0

    # arithmetic
    def __add__(self, other: Number) -> "QuadScalar":
        o = _co(other)
        if o is NotImplemented:
            return o
        if self._d == o._d:
            return QuadScalar._raw(self._p + o._p, self._q + o._q, self._d)
        return QuadScalar._raw(self._p * o._d + o._p * self._d, self._q * o._d + o._q * self._d, self._d * o._d)

    __radd__ = __add__

    def __neg__(self) -> "QuadScalar":
        return QuadScalar._raw(-self._p, -self._q, self._d)

    def __pos__(self) -> "QuadScalar":
        return self

    def __sub__(self, other: Number) -> "QuadScalar":
        o = _co(other)
        if o is NotImplemented:
            return o
        return self + (-o)

    def __rsub__(self, other: Number) -> "QuadScalar":
        return (-self) + other

    def __mul__(self, other: Number) -> "QuadScalar":
        o = _co(other)
        if o is NotImplemented:
            return o
        return QuadScalar._raw(self._p * o._p + 2 * self._q * o._q, self._p * o._q + self._q * o._p, self._d * o._d)

    __rmul__ = __mul__

    def conjugate(self) -> "QuadScalar":
        return QuadScalar._raw(self._p, -self._q, self._d)

    def __truediv__(self, other: Number) -> "QuadScalar":
        o = _co(other)
        if o is NotImplemented:
            return o
        if o._p == 0 and o._q == 0:
            raise ZeroDivisionError("division by the zero scalar")
        # x / y = x * conj(y) * d_y / (p_y^2 - 2 q_y^2)
        norm = o._p * o._p - 2 * o._q * o._q
        num = self * QuadScalar._raw(o._p * o._d, -o._q * o._d, 1)
        return QuadScalar._raw(num._p, num._q, num._d * norm)

    def __rtruediv__(self, other: Number) -> "QuadScalar":
        return _co(other) / self

    def __abs__(self) -> "QuadScalar":
        return -self if self.sign() < 0 else self

    # ordering
    def sign(self) -> int:
        return _sign(self._p, self._q)

    def _cmp(self, other: Number) -> int:
        o = other if type(other) is QuadScalar else _co(other)
        if self._d == o._d:
            return _sign(self._p - o._p, self._q - o._q)
        return _sign(self._p * o._d - o._p * self._d, self._q * o._d - o._q * self._d)

    def __lt__(self, other: Number) -> bool:
        return self._cmp(other) < 0

    def __le__(self, other: Number) -> bool:
        return self._cmp(other) <= 0

    def __gt__(self, other: Number) -> bool:
        return self._cmp(other) > 0

    def __ge__(self, other: Number) -> bool:
        return self._cmp(other) >= 0

    def __eq__(self, other: object) -> bool:
        if isinstance(other, QuadScalar):
            return self._p == other._p and self._q == other._q and self._d == other._d
        if isinstance(other, (int, Fraction)):
            return self._q == 0 and Fraction(self._p, self._d) == other
        return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(Fraction(self._p, self._d)) if self._q == 0 else hash((self._p, self._q, self._d))
        return self._hash

    def __bool__(self) -> bool:
        return self._p != 0 or self._q != 0

    def floor(self) -> int:
        """Exact integer part, using ``isqrt`` on ``2 q^2``."""
        p, q, d = self._p, self._q, self._d
        if q == 0:
            return p // d
        r = math.isqrt(2 * q * q)
        m = r if q > 0 else -r - 1  # floor(q*sqrt2); 2q^2 is never a square
        n = (p + m) // d
        while self >= n + 1:
            n += 1
        return n

    def __floor__(self) -> int:
        return self.floor()

    def ceil(self) -> int:
        return -((-self).floor())

    def frac(self) -> "QuadScalar":
        """``self mod 1`` in ``[0, 1)``."""
        return self - self.floor()

    def __float__(self) -> float:
        return float(Fraction(self._p, self._d)) + float(Fraction(self._q, self._d)) * SQRT2_FLOAT

    # presentation
    def to_json(self) -> dict:
        return {"a": _frac_str(self.a), "b": _frac_str(self.b)}

    @classmethod
    def from_json(cls, obj) -> "QuadScalar":
        if isinstance(obj, dict):
            return cls(Fraction(obj["a"]), Fraction(obj.get("b", "0")))
        if isinstance(obj, (int, str)):
            return parse_scalar(str(obj))
        raise ValueError(f"not a scalar: {obj!r}")

    def exact_str(self) -> str:
        a, b = self.a, self.b
        if b == 0:
            return _frac_str(a)
        bs = "sqrt2" if b == 1 else "-sqrt2" if b == -1 else f"{_frac_str(b)}*sqrt2"
        if a == 0:
            return bs
        return f"{_frac_str(a)}{'' if bs.startswith('-') else '+'}{bs}"

    def display(self) -> str:
        """Exact form followed by a decimal rendering, e.g. ``1/2 (0.5)``."""
        return f"{self.exact_str()} ({float(self):.6g})"

    def __repr__(self) -> str:
        return f"Q({self.exact_str()})"

    __str__ = exact_str



def _sign(p: int, q: int) -> int:
    """Sign of ``p + q*sqrt(2)``."""
    if q == 0:
        return (p > 0) - (p < 0)
    if p == 0:
        return 1 if q > 0 else -1
    if (p > 0) == (q > 0):
        return 1 if p > 0 else -1
    # opposite signs: compare p^2 with 2 q^2
    return (1 if p > 0 else -1) if p * p > 2 * q * q else (1 if q > 0 else -1)

def _co(x) -> QuadScalar:
    if isinstance(x, QuadScalar):
        return x
    if isinstance(x, int):
        return QuadScalar._raw(x, 0, 1)
    if isinstance(x, Fraction):
        return QuadScalar._raw(x.numerator, 0, x.denominator)
    return NotImplemented


def _frac_str(f: Fraction) -> str:
    return str(f.numerator) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"


ZERO = QuadScalar(0)
ONE = QuadScalar(1)
SQRT2 = QuadScalar(0, 1)
ALPHA = SQRT2 - 1

_TERM = re.compile(r"\s*([+-]?)\s*([0-9]+(?:/[0-9]+)?)?\s*(\*?\s*(sqrt2|alpha))?\s*")


def parse_scalar(text: str) -> QuadScalar:
    """Parse ``"1/2"``, ``"-3+2*sqrt2"``, ``"alpha"`` or ``"2*alpha-1/3"``."""
    s = text.strip().replace(" ", "")
    if not s:
        raise ValueError("empty scalar")
    total = ZERO
    pos = 0
    while pos < len(s):
        m = _TERM.match(s, pos)
        if not m or m.end() == pos or (m.group(2) is None and m.group(4) is None):
            raise ValueError(f"cannot parse scalar {text!r}")
        coef = Fraction(m.group(2)) if m.group(2) else Fraction(1)
        if m.group(1) == "-":
            coef = -coef
        unit = {None: ONE, "sqrt2": SQRT2, "alpha": ALPHA}[m.group(4)]
        total = total + unit * coef
        pos = m.end()
    return total


def Q(x: Number | str) -> QuadScalar:
    """Shorthand constructor accepting ints, Fractions, scalars and strings."""
    if isinstance(x, str):
        return parse_scalar(x)
    return QuadScalar.coerce(x)


@dataclass(frozen=True, slots=True)
class Interval:
    """Half-open interval ``[lo, hi)`` with ``lo < hi``."""

    lo: QuadScalar
    hi: QuadScalar

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi})")

    @property
    def length(self) -> QuadScalar:
        return self.hi - self.lo

    def contains(self, x: QuadScalar) -> bool:
        return self.lo <= x < self.hi

    def shift(self, t: QuadScalar) -> "Interval":
        return Interval(self.lo + t, self.hi + t)

    def to_json(self) -> list:
        return [self.lo.to_json(), self.hi.to_json()]

    @classmethod
    def from_json(cls, obj) -> "Interval":
        return cls(QuadScalar.from_json(obj[0]), QuadScalar.from_json(obj[1]))


class IntervalSet:
    """Finite union of half-open intervals in canonical (sorted, merged) form."""

    __slots__ = ("parts", "_los")

    def __init__(self, parts: Iterable[Interval | tuple] = ()):
        self.parts: tuple[Interval, ...] = _canonical(parts)
        self._los = None

    @classmethod
    def _trusted(cls, parts: tuple[Interval, ...]) -> "IntervalSet":
        obj = cls.__new__(cls)
        obj.parts = parts
        obj._los = None
        return obj

    @classmethod
    def span(cls, lo: Number, hi: Number) -> "IntervalSet":
        lo, hi = _co(lo), _co(hi)
        return cls._trusted((Interval(lo, hi),)) if lo < hi else EMPTY

    def __iter__(self) -> Iterator[Interval]:
        return iter(self.parts)

    def __len__(self) -> int:
        return len(self.parts)

    def __bool__(self) -> bool:
        return bool(self.parts)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, IntervalSet) and self.parts == other.parts

    def __hash__(self) -> int:
        return hash(self.parts)

    def __repr__(self) -> str:
        return "IntervalSet(" + " ∪ ".join(f"[{p.lo}, {p.hi})" for p in self.parts) + ")"

    def measure(self) -> QuadScalar:
        total = ZERO
        for p in self.parts:
            total = total + p.length
        return total

    def contains(self, x: QuadScalar) -> bool:
        if self._los is None:
            self._los = [p.lo for p in self.parts]
        i = bisect_right(self._los, x) - 1
        return i >= 0 and x < self.parts[i].hi

    def locate(self, x: QuadScalar) -> int:
        """Index of the part containing ``x`` or -1."""
        if self._los is None:
            self._los = [p.lo for p in self.parts]
        i = bisect_right(self._los, x) - 1
        return i if i >= 0 and x < self.parts[i].hi else -1

    def lower(self) -> QuadScalar:
        return self.parts[0].lo

    def upper(self) -> QuadScalar:
        return self.parts[-1].hi

    def shift(self, t: QuadScalar) -> "IntervalSet":
        return IntervalSet._trusted(tuple(p.shift(t) for p in self.parts))

    def breakpoints(self) -> list[QuadScalar]:
        out = []
        for p in self.parts:
            out.append(p.lo)
            out.append(p.hi)
        return out

    def union(self, other: "IntervalSet") -> "IntervalSet":
        if not other.parts:
            return self
        if not self.parts:
            return other
        return IntervalSet(self.parts + other.parts)

    __or__ = union

    def intersection(self, other: "IntervalSet") -> "IntervalSet":
        return _sweep(self, other, lambda a, b: a and b)

    __and__ = intersection

    def difference(self, other: "IntervalSet") -> "IntervalSet":
        if not other.parts or not self.parts:
            return self
        return _sweep(self, other, lambda a, b: a and not b)

    __sub__ = difference

    def symmetric_difference(self, other: "IntervalSet") -> "IntervalSet":
        return _sweep(self, other, lambda a, b: a != b)

    __xor__ = symmetric_difference

    def issubset(self, other: "IntervalSet") -> bool:
        return not (self - other)

    def isdisjoint(self, other: "IntervalSet") -> bool:
        return not (self & other)

    def clip(self, lo: Number, hi: Number) -> "IntervalSet":
        return self & IntervalSet.span(lo, hi)

    def to_json(self) -> list:
        return [p.to_json() for p in self.parts]

    @classmethod
    def from_json(cls, obj) -> "IntervalSet":
        return cls(Interval.from_json(p) for p in obj)


def _as_interval(p) -> Interval | None:
    if isinstance(p, Interval):
        return p
    lo, hi = Q(p[0]), Q(p[1])
    return Interval(lo, hi) if lo < hi else None


def _canonical(parts: Iterable) -> tuple[Interval, ...]:
    items = [q for q in (_as_interval(p) for p in parts) if q is not None]
    if len(items) <= 1:
        return tuple(items)
    items.sort(key=lambda it: it.lo)
    out: list[Interval] = []
    cur_lo, cur_hi = items[0].lo, items[0].hi
    for it in items[1:]:
        if it.lo <= cur_hi:
            if it.hi > cur_hi:
                cur_hi = it.hi
        else:
            out.append(Interval(cur_lo, cur_hi))
            cur_lo, cur_hi = it.lo, it.hi
    out.append(Interval(cur_lo, cur_hi))
    return tuple(out)


def _sweep(A: IntervalSet, B: IntervalSet, keep) -> IntervalSet:
    """Boolean combination of two canonical sets by a merged boundary sweep."""
    i = j = 0
    out: list[Interval] = []
    start = None
    in_a = in_b = False
    # walk boundary events in order; a boundary of A is (value, which, entering)
    ea = [(v, k % 2 == 0) for k, v in enumerate(A.breakpoints())]
    eb = [(v, k % 2 == 0) for k, v in enumerate(B.breakpoints())]
    while i < len(ea) or j < len(eb):
        if j >= len(eb) or (i < len(ea) and ea[i][0] <= eb[j][0]):
            x = ea[i][0]
        else:
            x = eb[j][0]
        while i < len(ea) and ea[i][0] == x:
            in_a = ea[i][1]
            i += 1
        while j < len(eb) and eb[j][0] == x:
            in_b = eb[j][1]
            j += 1
        now = keep(in_a, in_b)
        if now and start is None:
            start = x
        elif not now and start is not None:
            if start < x:
                if out and out[-1].hi == start:
                    out[-1] = Interval(out[-1].lo, x)
                else:
                    out.append(Interval(start, x))
            start = None
    return IntervalSet._trusted(tuple(out))


EMPTY = IntervalSet._trusted(())
UNIT = IntervalSet.span(0, 1)


def circle_translate(A: IntervalSet, t: Number) -> IntervalSet:
    """Image of ``A`` (a subset of ``[0,1)``) under ``theta -> theta + t mod 1``."""
    t = _co(t).frac()
    if not t or not A.parts:
        return A
    pieces: list[Interval] = []
    one = ONE
    for p in A.parts:
        lo, hi = p.lo + t, p.hi + t
        if hi <= one:
            pieces.append(Interval(lo, hi))
        elif lo >= one:
            pieces.append(Interval(lo - 1, hi - 1))
        else:
            pieces.append(Interval(lo, one))
            pieces.append(Interval(ZERO, hi - 1))
    return IntervalSet(pieces)


def sorted_unique(values: Iterable[QuadScalar]) -> list[QuadScalar]:
    return sorted(set(values))


def sum_scalars(values: Iterable[QuadScalar]) -> QuadScalar:
    total = ZERO
    for v in values:
        total = total + v
    return total


def max_scalar(values: Sequence[QuadScalar], default: QuadScalar = ZERO) -> QuadScalar:
    best = None
    for v in values:
        if best is None or v > best:
            best = v
    return default if best is None else best
