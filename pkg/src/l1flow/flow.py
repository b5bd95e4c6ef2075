"""Suspension flow over the rotation by alpha with a constant rational roof.

The phase space is ``[0,1) x [0,h)`` with coordinates ``(theta, s)``; flowing for time
``t`` raises ``s`` and, at each crossing of the roof, rotates ``theta`` by ``alpha``.
Measurable sets are represented by :class:`RectSet`, a canonical slab decomposition
(theta-interval, IntervalSet of heights).
"""
from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator

from .exactnum import (
    ALPHA,
    EMPTY,
    ONE,
    ZERO,
    Interval,
    IntervalSet,
    Number,
    Q,
    QuadScalar,
    circle_translate,
    sorted_unique,
)


class RefinementCapExceeded(RuntimeError):
    """An iterated refinement did not terminate within its configured cap."""


@dataclass(frozen=True)
class FlowParams:
    alpha: QuadScalar = ALPHA
    roof: QuadScalar = ONE

    def __post_init__(self):
        a = Q(self.alpha)
        h = Q(self.roof)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "roof", h)
        if not (ZERO < a < ONE) or a.is_rational():
            raise ValueError("alpha must be an irrational number in (0,1)")
        if not h.is_rational() or h <= 0:
            raise ValueError("roof must be a positive rational")

    def to_json(self) -> dict:
        return {"alpha": self.alpha.to_json(), "roof": self.roof.to_json()}

    @classmethod
    def from_json(cls, obj) -> "FlowParams":
        return cls(QuadScalar.from_json(obj["alpha"]), QuadScalar.from_json(obj["roof"]))


DEFAULT_FLOW = FlowParams()


@dataclass(frozen=True, slots=True)
class FlowPoint:
    theta: QuadScalar
    s: QuadScalar

    def __repr__(self) -> str:
        return f"({self.theta}, {self.s})"


def flow_by(x: FlowPoint, t: Number, params: FlowParams = DEFAULT_FLOW) -> FlowPoint:
    """The point ``x + t``."""
    w = x.s + t
    k = (w / params.roof).floor()
    return FlowPoint((x.theta + params.alpha * k).frac(), w - params.roof * k)


def orbit_time(x: FlowPoint, y: FlowPoint, params: FlowParams = DEFAULT_FLOW) -> QuadScalar | None:
    """The unique ``t`` with ``y = x + t``, or ``None`` if the points lie on different orbits."""
    delta = y.theta - x.theta
    k = delta.b / params.alpha.b
    if k.denominator != 1:
        return None
    rest = delta - params.alpha * int(k)
    if not rest.is_rational() or rest.a.denominator != 1:
        return None
    return params.roof * int(k) + (y.s - x.s)


# --------------------------------------------------------------------------- sets


class RectSet:
    """Finite union of rectangles ``theta-interval x height-interval``, canonical.

    Stored as sorted disjoint theta-slabs, each carrying a non-empty IntervalSet of
    heights; touching slabs with equal height sets are merged, so two RectSets are
    equal as sets iff their slab tuples are equal.
    """

    __slots__ = ("slabs", "_los")

    def __init__(self, slabs: Iterable[tuple[Interval, IntervalSet]] = ()):
        self.slabs: tuple[tuple[Interval, IntervalSet], ...] = _merge_slabs(list(slabs))
        self._los = None

    @classmethod
    def _trusted(cls, slabs) -> "RectSet":
        obj = cls.__new__(cls)
        obj.slabs = slabs
        obj._los = None
        return obj

    @classmethod
    def rect(cls, th_lo: Number, th_hi: Number, s_lo: Number, s_hi: Number) -> "RectSet":
        th_lo, th_hi, s_lo, s_hi = Q(th_lo), Q(th_hi), Q(s_lo), Q(s_hi)
        if not (th_lo < th_hi and s_lo < s_hi):
            return EMPTY_RECTS
        return cls._trusted(((Interval(th_lo, th_hi), IntervalSet.span(s_lo, s_hi)),))

    @classmethod
    def product(cls, thetas: IntervalSet, heights: IntervalSet) -> "RectSet":
        if not thetas or not heights:
            return EMPTY_RECTS
        return cls([(p, heights) for p in thetas])

    @classmethod
    def from_rects(cls, rects: Iterable[tuple]) -> "RectSet":
        """Union of rectangles given as ``(theta part, height part)`` pairs.

        Each part may be an Interval or an IntervalSet.
        """
        items: list[tuple[Interval, Interval]] = []
        for th, hs in rects:
            ths = th.parts if isinstance(th, IntervalSet) else (th,)
            hss = hs.parts if isinstance(hs, IntervalSet) else (hs,)
            for a in ths:
                for b in hss:
                    items.append((a, b))
        if not items:
            return EMPTY_RECTS
        if len(items) == 1:
            a, b = items[0]
            return cls._trusted(((a, IntervalSet._trusted((b,))),))
        bps = sorted_unique([a.lo for a, _ in items] + [a.hi for a, _ in items])
        buckets: list[list[Interval]] = [[] for _ in range(len(bps) - 1)]
        for a, b in items:
            i0 = bisect_left(bps, a.lo)
            i1 = bisect_left(bps, a.hi)
            for i in range(i0, i1):
                buckets[i].append(b)
        slabs = []
        for i, bucket in enumerate(buckets):
            if bucket:
                slabs.append((Interval(bps[i], bps[i + 1]), IntervalSet(bucket)))
        return cls(slabs)

    def __iter__(self) -> Iterator[tuple[Interval, IntervalSet]]:
        return iter(self.slabs)

    def __bool__(self) -> bool:
        return bool(self.slabs)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, RectSet) and self.slabs == other.slabs

    def __hash__(self) -> int:
        return hash(self.slabs)

    def __repr__(self) -> str:
        inner = "; ".join(f"[{th.lo},{th.hi})x{hs!r}" for th, hs in self.slabs)
        return f"RectSet({inner})"

    def rects(self) -> Iterator[tuple[Interval, Interval]]:
        for th, hs in self.slabs:
            for p in hs:
                yield th, p

    def rect_count(self) -> int:
        return sum(len(hs) for _, hs in self.slabs)

    def area(self) -> QuadScalar:
        total = ZERO
        for th, hs in self.slabs:
            total = total + th.length * hs.measure()
        return total

    def column(self, theta: QuadScalar) -> IntervalSet:
        if self._los is None:
            self._los = [th.lo for th, _ in self.slabs]
        i = bisect_right(self._los, theta) - 1
        if i >= 0 and theta < self.slabs[i][0].hi:
            return self.slabs[i][1]
        return EMPTY

    def contains(self, x: FlowPoint) -> bool:
        return self.column(x.theta).contains(x.s)

    def theta_support(self) -> IntervalSet:
        return IntervalSet(th for th, _ in self.slabs)

    def combine(self, other: "RectSet", op) -> "RectSet":
        bps = sorted_unique([th.lo for th, _ in self.slabs] + [th.hi for th, _ in self.slabs]
                            + [th.lo for th, _ in other.slabs] + [th.hi for th, _ in other.slabs])
        sa, sb = self.slabs, other.slabs
        ia = ib = 0
        out = []
        for k in range(len(bps) - 1):
            x = bps[k]
            while ia < len(sa) and sa[ia][0].hi <= x:
                ia += 1
            while ib < len(sb) and sb[ib][0].hi <= x:
                ib += 1
            ha = sa[ia][1] if ia < len(sa) and sa[ia][0].lo <= x else EMPTY
            hb = sb[ib][1] if ib < len(sb) and sb[ib][0].lo <= x else EMPTY
            res = op(ha, hb)
            if res:
                out.append((Interval(x, bps[k + 1]), res))
        return RectSet(out)

    def union(self, other: "RectSet") -> "RectSet":
        if not other.slabs:
            return self
        if not self.slabs:
            return other
        return self.combine(other, IntervalSet.union)

    __or__ = union

    def intersection(self, other: "RectSet") -> "RectSet":
        if not other.slabs or not self.slabs:
            return EMPTY_RECTS
        return self.combine(other, IntervalSet.intersection)

    __and__ = intersection

    def difference(self, other: "RectSet") -> "RectSet":
        if not other.slabs or not self.slabs:
            return self
        return self.combine(other, IntervalSet.difference)

    __sub__ = difference

    def symmetric_difference(self, other: "RectSet") -> "RectSet":
        return self.combine(other, IntervalSet.symmetric_difference)

    __xor__ = symmetric_difference

    def issubset(self, other: "RectSet") -> bool:
        return not (self - other)

    def isdisjoint(self, other: "RectSet") -> bool:
        return not (self & other)

    def restrict_theta(self, thetas: IntervalSet) -> "RectSet":
        return self & RectSet.product(thetas, IntervalSet.span(_MIN_S, _MAX_S))

    def to_json(self) -> list:
        return [{"base": th.to_json(), "height": p.to_json()} for th, p in self.rects()]

    @classmethod
    def from_json(cls, obj) -> "RectSet":
        return cls.from_rects((Interval.from_json(r["base"]), Interval.from_json(r["height"])) for r in obj)


_MIN_S = QuadScalar(-(10**9))
_MAX_S = QuadScalar(10**9)


def _merge_slabs(slabs: list) -> tuple:
    slabs = [(th, hs) for th, hs in slabs if hs]
    slabs.sort(key=lambda sl: sl[0].lo)
    out: list = []
    for th, hs in slabs:
        if out and out[-1][0].hi == th.lo and out[-1][1] == hs:
            out[-1] = (Interval(out[-1][0].lo, th.hi), hs)
        else:
            if out and out[-1][0].hi > th.lo:
                raise ValueError("overlapping slabs")
            out.append((th, hs))
    return tuple(out)


EMPTY_RECTS = RectSet._trusted(())


def phase_space(params: FlowParams = DEFAULT_FLOW) -> RectSet:
    return RectSet.rect(0, 1, 0, params.roof)


def mu(A: RectSet, params: FlowParams = DEFAULT_FLOW) -> QuadScalar:
    """Normalized measure ``area / h``."""
    return A.area() / params.roof


def flow_set(A: RectSet, t: Number, params: FlowParams = DEFAULT_FLOW) -> RectSet:
    """Image ``A + t``, splitting rectangles at the roof crossings."""
    t = Q(t)
    if not t or not A:
        return A
    h, alpha = params.roof, params.alpha
    pieces = []
    rotated: dict[int, dict] = {}
    for th, hs in A.slabs:
        for p in hs:
            w0, w1 = p.lo + t, p.hi + t
            k0 = (w0 / h).floor()
            k1 = (w1 / h).ceil() - 1
            for k in range(k0, k1 + 1):
                lo = w0 if w0 > h * k else h * k
                hi = w1 if w1 < h * (k + 1) else h * (k + 1)
                if lo < hi:
                    cache = rotated.setdefault(k, {})
                    ths = cache.get(th)
                    if ths is None:
                        ths = cache[th] = circle_translate(IntervalSet._trusted((th,)), alpha * k)
                    pieces.append((ths, Interval(lo - h * k, hi - h * k)))
    return RectSet.from_rects(pieces)


def segment_set(thetas: IntervalSet, a: Number, b: Number, params: FlowParams = DEFAULT_FLOW) -> RectSet:
    """``{(theta,0) + u : theta in thetas, a <= u < b}`` for any real ``a < b``."""
    a, b = Q(a), Q(b)
    if not thetas or not a < b:
        return EMPTY_RECTS
    h = params.roof
    k0 = (a / h).floor()
    k1 = (b / h).ceil() - 1
    rects = []
    for k in range(k0, k1 + 1):
        lo = a if a > h * k else h * k
        hi = b if b < h * (k + 1) else h * (k + 1)
        if lo < hi:
            rects.append((circle_translate(thetas, params.alpha * k), Interval(lo - h * k, hi - h * k)))
    return RectSet.from_rects(rects)


def segment_measure(A: RectSet, theta0: QuadScalar, a: Number, b: Number,
                    params: FlowParams = DEFAULT_FLOW) -> QuadScalar:
    """Lebesgue measure of ``{u in [a,b) : (theta0,0) + u in A}``."""
    a, b = Q(a), Q(b)
    h = params.roof
    total = ZERO
    if not a < b:
        return total
    for k in range((a / h).floor(), (b / h).ceil()):
        lo = a if a > h * k else h * k
        hi = b if b < h * (k + 1) else h * (k + 1)
        if lo < hi:
            col = A.column((theta0 + params.alpha * k).frac())
            total = total + col.clip(lo - h * k, hi - h * k).measure()
    return total


# --------------------------------------------------------------------------- step functions


class StepFunction:
    """Piecewise-constant function on a subset of ``[0,1)`` with exact breakpoints."""

    __slots__ = ("pieces",)

    def __init__(self, pieces: Iterable[tuple[Interval, QuadScalar]] = ()):
        items = sorted(pieces, key=lambda pv: pv[0].lo)
        out: list[tuple[Interval, QuadScalar]] = []
        for iv, v in items:
            if out and out[-1][0].hi == iv.lo and out[-1][1] == v:
                out[-1] = (Interval(out[-1][0].lo, iv.hi), v)
            else:
                out.append((iv, v))
        self.pieces = tuple(out)

    def __call__(self, x: QuadScalar) -> QuadScalar:
        for iv, v in self.pieces:
            if iv.contains(x):
                return v
        return ZERO

    def __add__(self, other: "StepFunction") -> "StepFunction":
        return _combine_steps(self, other, lambda a, b: a + b)

    def __sub__(self, other: "StepFunction") -> "StepFunction":
        return _combine_steps(self, other, lambda a, b: a - b)

    def domain(self) -> IntervalSet:
        return IntervalSet(iv for iv, _ in self.pieces)

    def where(self, pred) -> IntervalSet:
        return IntervalSet(iv for iv, v in self.pieces if pred(v))

    def values(self) -> list[QuadScalar]:
        return [v for _, v in self.pieces]

    def integral(self) -> QuadScalar:
        total = ZERO
        for iv, v in self.pieces:
            total = total + iv.length * v
        return total

    def __eq__(self, other: object) -> bool:
        return isinstance(other, StepFunction) and self.pieces == other.pieces

    def __repr__(self) -> str:
        return "StepFunction(" + ", ".join(f"[{iv.lo},{iv.hi})->{v}" for iv, v in self.pieces) + ")"

    def to_json(self) -> list:
        return [{"interval": iv.to_json(), "value": v.to_json()} for iv, v in self.pieces]


def _combine_steps(f: StepFunction, g: StepFunction, op) -> StepFunction:
    bps = sorted_unique([iv.lo for iv, _ in f.pieces] + [iv.hi for iv, _ in f.pieces]
                        + [iv.lo for iv, _ in g.pieces] + [iv.hi for iv, _ in g.pieces])
    out = []
    i = j = 0
    for k in range(len(bps) - 1):
        x = bps[k]
        while i < len(f.pieces) and f.pieces[i][0].hi <= x:
            i += 1
        while j < len(g.pieces) and g.pieces[j][0].hi <= x:
            j += 1
        fin = i < len(f.pieces) and f.pieces[i][0].lo <= x
        gin = j < len(g.pieces) and g.pieces[j][0].lo <= x
        if fin or gin:
            out.append((Interval(x, bps[k + 1]), op(f.pieces[i][1] if fin else ZERO, g.pieces[j][1] if gin else ZERO)))
    return StepFunction(out)


# --------------------------------------------------------------------------- cross sections

DEFAULT_CAP = 10**6


@dataclass(frozen=True)
class CrossSection:
    """Section ``base x {s=0}`` with its first-return partition."""

    base: IntervalSet
    returns: tuple[tuple[Interval, int], ...]
    params: FlowParams = DEFAULT_FLOW

    def return_count(self, theta: QuadScalar) -> int:
        for iv, k in self.returns:
            if iv.contains(theta):
                return k
        raise ValueError(f"{theta} is not in the section base")

    def gap(self, theta: QuadScalar) -> QuadScalar:
        return self.params.roof * self.return_count(theta)

    def contains(self, x: FlowPoint) -> bool:
        return x.s == 0 and self.base.contains(x.theta)

    def next_point(self, c: FlowPoint) -> FlowPoint:
        """``sigma_C(c)``."""
        return flow_by(c, self.gap(c.theta), self.params)

    def gaps(self) -> list[QuadScalar]:
        return sorted({self.params.roof * k for _, k in self.returns})

    def min_gap(self) -> QuadScalar:
        return self.params.roof * min(k for _, k in self.returns)

    def max_gap(self) -> QuadScalar:
        return self.params.roof * max(k for _, k in self.returns)

    def kac_sum(self) -> QuadScalar:
        total = ZERO
        for iv, k in self.returns:
            total = total + iv.length * k
        return total

    def to_json(self) -> dict:
        return {"base": self.base.to_json(), "returns": [[iv.to_json(), k] for iv, k in self.returns]}


def build_cross_section(base: IntervalSet, params: FlowParams = DEFAULT_FLOW, cap: int = DEFAULT_CAP) -> CrossSection:
    """Return partition by translating the base backward one rotation step at a time."""
    if not base:
        raise ValueError("cross section base must be non-empty")
    if base.lower() < 0 or base.upper() > 1:
        raise ValueError("cross section base must lie in [0,1)")
    remaining = base
    pieces: list[tuple[Interval, int]] = []
    j = 0
    while remaining:
        j += 1
        if j > cap:
            raise RefinementCapExceeded(f"return partition unresolved after {cap} steps")
        hit = remaining & circle_translate(base, -params.alpha * j)
        if hit:
            pieces.extend((iv, j) for iv in hit)
            remaining = remaining - hit
    pieces.sort(key=lambda p: p[0].lo)
    return CrossSection(base, tuple(pieces), params)


def backward_returns(C: CrossSection, cap: int = DEFAULT_CAP) -> tuple[tuple[Interval, int], ...]:
    """Partition of the base by the number of rotation steps back to the previous section point."""
    remaining = C.base
    pieces = []
    j = 0
    while remaining:
        j += 1
        if j > cap:
            raise RefinementCapExceeded(f"backward partition unresolved after {cap} steps")
        hit = remaining & circle_translate(C.base, C.params.alpha * j)
        if hit:
            pieces.extend((iv, j) for iv in hit)
            remaining = remaining - hit
    pieces.sort(key=lambda p: p[0].lo)
    return tuple(pieces)


# --------------------------------------------------------------------------- tessellations

CANONICAL = "canonical-gap"
VORONOI = "voronoi"


@dataclass(frozen=True)
class Tessellation:
    section: CrossSection
    kind: str = CANONICAL
    _back: tuple = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in (CANONICAL, VORONOI):
            raise ValueError(f"unknown tessellation kind {self.kind!r}")

    @property
    def params(self) -> FlowParams:
        return self.section.params

    def _backward(self):
        if self._back is None:
            object.__setattr__(self, "_back", backward_returns(self.section))
        return self._back

    def previous_gap(self, theta: QuadScalar) -> QuadScalar:
        for iv, k in self._backward():
            if iv.contains(theta):
                return self.params.roof * k
        raise ValueError(f"{theta} is not in the section base")

    def window(self, theta: QuadScalar) -> tuple[QuadScalar, QuadScalar]:
        """Offsets ``[lo, hi)`` of the cell of the section point at ``theta``.

        Pointwise, Voronoi cells are ``(lo, hi]`` since midpoints go to the earlier point.
        """
        if self.kind == CANONICAL:
            return ZERO, self.section.gap(theta)
        return -self.previous_gap(theta) / 2, self.section.gap(theta) / 2

    def window_partition(self) -> list[tuple[Interval, QuadScalar, QuadScalar]]:
        """Base pieces on which the cell window is constant, with ``(lo, hi)``."""
        h = self.params.roof
        if self.kind == CANONICAL:
            return [(iv, ZERO, h * k) for iv, k in self.section.returns]
        out = []
        for iv, k in self.section.returns:
            for jv, j in self._backward():
                common = IntervalSet._trusted((iv,)) & IntervalSet._trusted((jv,))
                for part in common:
                    out.append((part, -h * j / 2, h * k / 2))
        out.sort(key=lambda w: w[0].lo)
        return out

    def project(self, x: FlowPoint) -> tuple[FlowPoint, QuadScalar]:
        """Section point owning ``x`` and the signed offset ``x - c``."""
        p = self.params
        base = self.section.base
        theta, off = x.theta, x.s
        steps = 0
        while not base.contains(theta):
            theta = (theta - p.alpha).frac()
            off = off + p.roof
            steps += 1
            if steps > DEFAULT_CAP:
                raise RefinementCapExceeded("projection did not find a section point")
        c = FlowPoint(theta, ZERO)
        if self.kind == CANONICAL:
            return c, off
        g = self.section.gap(theta)
        if off * 2 <= g:  # ties go to the earlier point
            return c, off
        return self.section.next_point(c), off - g

    def cell(self, c_theta: QuadScalar) -> list[tuple[QuadScalar, Interval]]:
        """Cell of one section point as ``(column theta, height interval)`` pieces."""
        lo, hi = self.window(c_theta)
        return _point_segment(c_theta, lo, hi, self.params)

    def cell_regions(self) -> list[tuple[Interval, RectSet]]:
        """For each window piece, the union of the cells of its section points."""
        return [(iv, segment_set(IntervalSet._trusted((iv,)), lo, hi, self.params))
                for iv, lo, hi in self.window_partition()]

    def to_json(self) -> dict:
        return {"section": self.section.to_json(), "kind": self.kind}


def _point_segment(theta: QuadScalar, lo: QuadScalar, hi: QuadScalar, params: FlowParams) -> list:
    """Cell of a single section point as a list of ``(theta, height interval)`` pieces."""
    h = params.roof
    out = []
    for k in range((lo / h).floor(), (hi / h).ceil()):
        a = lo if lo > h * k else h * k
        b = hi if hi < h * (k + 1) else h * (k + 1)
        if a < b:
            out.append(((theta + params.alpha * k).frac(), Interval(a - h * k, b - h * k)))
    return out


def fiber_measure(A: RectSet, c_theta: QuadScalar, T: Tessellation) -> QuadScalar:
    """``lambda_c(A)``: Lebesgue measure of A inside the cell of the section point at ``c_theta``."""
    lo, hi = T.window(c_theta)
    return segment_measure(A, c_theta, lo, hi, T.params)


def fiber_measure_batch(A: RectSet, T: Tessellation) -> StepFunction:
    """``c -> lambda_c(A)`` as an exact step function of the base coordinate."""
    p = T.params
    h = p.roof
    total = StepFunction()
    for iv, lo, hi in T.window_partition():
        acc = StepFunction([(iv, ZERO)])
        for k in range((lo / h).floor(), (hi / h).ceil()):
            a = lo if lo > h * k else h * k
            b = hi if hi < h * (k + 1) else h * (k + 1)
            if not a < b:
                continue
            band = IntervalSet.span(a - h * k, b - h * k)
            shift = p.alpha * k
            cols = circle_translate(IntervalSet._trusted((iv,)), shift)
            vals = []
            for th, hs in A.slabs:
                meet = cols & IntervalSet._trusted((th,))
                if not meet:
                    continue
                m = (hs & band).measure()
                if m:
                    for part in circle_translate(meet, -shift):
                        vals.append((part, m))
            acc = acc + StepFunction(vals)
        total = total + acc
    return total


# --------------------------------------------------------------------------- lacunary partition


def lacunary_partition(C: CrossSection, V: Number) -> list[CrossSection]:
    """Split ``C`` into sub-sections whose consecutive orbit distances all exceed ``V``.

    Points are coloured by their position inside blocks between visits to a sparse
    marker sub-section: runs of period ``m`` and ``m+1`` (with ``m * min_gap > V``) tile
    every block, so ``m + 1`` colours suffice.
    """
    V = Q(V)
    if V <= 0:
        raise ValueError("V must be positive")
    p = C.params
    if C.min_gap() > V:
        return [C]
    gmin = C.min_gap()
    m = (V / gmin).floor() + 1
    min_block = m * m - m
    kmax = max(k for _, k in C.returns)
    first = C.base.parts[0]
    width = first.length
    while True:
        width = width / 2
        marker = build_cross_section(IntervalSet.span(first.lo, first.lo + width), p)
        if min(k for _, k in marker.returns) >= min_block * kmax:
            break
    classes: dict[int, list[IntervalSet]] = {}
    for iv, k in marker.returns:
        # refine iv so that membership of every intermediate rotation step is constant
        cuts = [IntervalSet._trusted((iv,))]
        for j in range(1, k):
            inside = circle_translate(C.base, -p.alpha * j)
            nxt = []
            for piece in cuts:
                for part in (piece & inside, piece - inside):
                    if part:
                        nxt.append(part)
            cuts = nxt
        for piece in cuts:
            rep = piece.parts[0].lo
            steps = [0] + [j for j in range(1, k) if C.base.contains((rep + p.alpha * j).frac())]
            L = len(steps)
            b = L % m
            a = (L - b * (m + 1)) // m
            if a < 0:
                raise RuntimeError("marker blocks too short for the colouring")
            for i, j in enumerate(steps):
                colour = i % m if i < a * m else (i - a * m) % (m + 1)
                classes.setdefault(colour, []).append(circle_translate(piece, p.alpha * j))
    out = []
    for colour in sorted(classes):
        base = IntervalSet([iv for s in classes[colour] for iv in s])
        out.append(build_cross_section(base, p))
    return out


# --------------------------------------------------------------------------- fiber profiles


def gap_atlas(T: Tessellation) -> list[tuple[Interval, int, int, int]]:
    """Base pieces with constant ``(previous, own, next)`` return counts."""
    C = T.section
    alpha = C.params.alpha
    out = []
    back = T._backward()
    for iv, k in C.returns:
        piece = IntervalSet._trusted((iv,))
        for jv, j in back:
            pj = piece & IntervalSet._trusted((jv,))
            if not pj:
                continue
            for nv, kn in C.returns:
                # next section point is theta + k*alpha, which must land in nv
                pn = pj & circle_translate(IntervalSet._trusted((nv,)), -alpha * k)
                for part in pn:
                    out.append((part, j, k, kn))
    out.sort(key=lambda w: w[0].lo)
    return out


def fiber_profile(A: RectSet, T: Tessellation, pieces=None) -> list[tuple[Interval, IntervalSet]]:
    """Per-cell offsets of ``A``, as a step function of the section point.

    ``pieces`` is a list of ``(base interval, lo, hi)`` offset windows (defaults to the
    cell windows).  Returns ``(sub-interval, offsets in [lo, hi))`` pairs such that for
    every section point in the sub-interval the offsets ``u`` with ``c + u in A`` are
    exactly the given set.
    """
    p = T.params
    h, alpha = p.roof, p.alpha
    if pieces is None:
        pieces = T.window_partition()
    bounds = sorted_unique([ZERO] + [th.lo for th, _ in A.slabs] + [th.hi for th, _ in A.slabs])
    out: list[tuple[Interval, IntervalSet]] = []
    for iv, lo, hi in pieces:
        ks = range((lo / h).floor(), (hi / h).ceil())
        cuts = {iv.lo, iv.hi}
        if A:
            for k in ks:
                sh = alpha * k
                for b in bounds:
                    q = (b - sh).frac()
                    if iv.lo < q < iv.hi:
                        cuts.add(q)
        cuts = sorted(cuts)
        prev = None
        for a, b in zip(cuts, cuts[1:]):
            offs = []
            if A:
                for k in ks:
                    base_lo = lo if lo > h * k else h * k
                    base_hi = hi if hi < h * (k + 1) else h * (k + 1)
                    if not base_lo < base_hi:
                        continue
                    col = A.column((a + alpha * k).frac())
                    if col:
                        for part in col.clip(base_lo - h * k, base_hi - h * k):
                            offs.append(part.shift(h * k))
            offsets = IntervalSet(offs)
            if prev is not None and prev[1] == offsets and prev[0].hi == a:
                prev = (Interval(prev[0].lo, b), offsets)
                out[-1] = prev
            else:
                prev = (Interval(a, b), offsets)
                out.append(prev)
    return out


def profile_set(profile: Iterable[tuple[Interval, IntervalSet]], params: FlowParams = DEFAULT_FLOW) -> RectSet:
    """Reassemble a set from per-cell offsets."""
    rects = []
    for iv, offs in profile:
        base = IntervalSet._trusted((iv,))
        for part in offs:
            rects.extend(segment_set(base, part.lo, part.hi, params).rects())
    return RectSet.from_rects(rects)


def profile_measure(profile: Iterable[tuple[Interval, IntervalSet]]) -> StepFunction:
    return StepFunction([(iv, offs.measure()) for iv, offs in profile])


def refine_profiles(*profiles) -> list[tuple[Interval, list[IntervalSet]]]:
    """Common refinement of several profiles over the same base."""
    bps = sorted_unique([iv.lo for prof in profiles for iv, _ in prof] + [iv.hi for prof in profiles for iv, _ in prof])
    idx = [0] * len(profiles)
    out = []
    for a, b in zip(bps, bps[1:]):
        vals = []
        covered = False
        for n, prof in enumerate(profiles):
            while idx[n] < len(prof) and prof[idx[n]][0].hi <= a:
                idx[n] += 1
            if idx[n] < len(prof) and prof[idx[n]][0].lo <= a:
                vals.append(prof[idx[n]][1])
                covered = True
            else:
                vals.append(EMPTY)
        if covered:
            out.append((Interval(a, b), vals))
    return out
