"""Piecewise translations of the line that commensurate the half-line, and their index.

A :class:`TailedTranslation` is a measure-preserving injection defined on a bounded
window by finitely many translated intervals and outside the window by two tail
shifts.  A missing tail (``None``) means the map is undefined there; maps whose left
tail is missing have domain and range commensurate with ``[0, inf)``.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, Optional

from .exactnum import (
    ALPHA,
    EMPTY,
    ZERO,
    Interval,
    IntervalSet,
    Number,
    Q,
    QuadScalar,
    max_scalar,
)


class NotCommensurate(ValueError):
    """A set differs from the half-line by infinite measure."""


class ChargeDivergence(ValueError):
    """The arc-crossing integral over a basepoint is not defined for this map."""


@dataclass(frozen=True)
class TailSet:
    """``(-inf, left) ∪ core ∪ [right, inf)`` with either tail optional."""

    core: IntervalSet = EMPTY
    left: Optional[QuadScalar] = None
    right: Optional[QuadScalar] = None

    def __post_init__(self):
        # absorb core parts that touch or overlap a tail
        core, left, right = self.core, self.left, self.right
        if left is not None:
            left = Q(left)
            while core and core.parts[0].lo <= left:
                left = max_scalar([left, core.parts[0].hi])
                core = core - IntervalSet.span(core.parts[0].lo, left)
        if right is not None:
            right = Q(right)
            while core and core.parts[-1].hi >= right:
                right = min(right, core.parts[-1].lo)
                core = core - IntervalSet.span(right, core.parts[-1].hi)
        if left is not None and right is not None and right <= left:
            core = EMPTY
            right = left
        object.__setattr__(self, "core", core)
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    @classmethod
    def half_line(cls, start: Number = 0) -> "TailSet":
        return cls(EMPTY, None, Q(start))

    def bounds(self) -> list[QuadScalar]:
        out = list(self.core.breakpoints())
        if self.left is not None:
            out.append(self.left)
        if self.right is not None:
            out.append(self.right)
        return out

    def window_form(self, lo: QuadScalar, hi: QuadScalar) -> IntervalSet:
        parts = list(self.core.parts)
        if self.left is not None and lo < self.left:
            parts.append(Interval(lo, self.left))
        if self.right is not None and self.right < hi:
            parts.append(Interval(self.right, hi))
        return IntervalSet(parts).clip(lo, hi)

    def _binary(self, other: "TailSet", op, flag_op) -> "TailSet":
        bs = self.bounds() + other.bounds()
        if not bs:
            bs = [ZERO]
        lo = min(bs) - 1
        hi = max(bs) + 1
        core = op(self.window_form(lo, hi), other.window_form(lo, hi))
        left_flag = flag_op(self.left is not None, other.left is not None)
        right_flag = flag_op(self.right is not None, other.right is not None)
        return TailSet._from_window(core, lo, hi, left_flag, right_flag)

    @staticmethod
    def _from_window(core: IntervalSet, lo, hi, left_flag: bool, right_flag: bool) -> "TailSet":
        left = right = None
        parts = list(core.parts)
        if left_flag:
            if parts and parts[0].lo == lo:
                left = parts.pop(0).hi
            else:
                left = lo
        if right_flag:
            if parts and parts[-1].hi == hi:
                right = parts.pop().lo
            else:
                right = hi
        return TailSet(IntervalSet(parts), left, right)

    def union(self, other: "TailSet") -> "TailSet":
        return self._binary(other, IntervalSet.union, lambda a, b: a or b)

    def intersection(self, other: "TailSet") -> "TailSet":
        return self._binary(other, IntervalSet.intersection, lambda a, b: a and b)

    def difference(self, other: "TailSet") -> "TailSet":
        return self._binary(other, IntervalSet.difference, lambda a, b: a and not b)

    __or__, __and__, __sub__ = union, intersection, difference

    def is_bounded(self) -> bool:
        return self.left is None and self.right is None

    def measure(self) -> QuadScalar:
        if not self.is_bounded():
            raise ValueError("unbounded set has infinite measure")
        return self.core.measure()

    def commensurate_with_half_line(self) -> bool:
        return self.left is None and self.right is not None

    def issubset(self, other: "TailSet") -> bool:
        d = self - other
        return d.is_bounded() and not d.core

    def to_json(self) -> dict:
        return {"core": self.core.to_json(),
                "left": None if self.left is None else self.left.to_json(),
                "right": None if self.right is None else self.right.to_json()}


HALF_LINE = TailSet.half_line()


@dataclass(frozen=True)
class TailedTranslation:
    window: QuadScalar
    pieces: tuple[tuple[Interval, QuadScalar], ...]
    left_tail: Optional[QuadScalar]
    right_tail: Optional[QuadScalar]

    def __post_init__(self):
        object.__setattr__(self, "window", Q(self.window))
        items = sorted(((iv, Q(t)) for iv, t in self.pieces), key=lambda p: p[0].lo)
        object.__setattr__(self, "pieces", tuple(_merge_pieces(items)))

    # construction helpers
    @classmethod
    def shift(cls, t: Number, start: Number = 0) -> "TailedTranslation":
        """``x -> x + t`` on ``[start, inf)``."""
        start = Q(start)
        if start >= 0:
            return cls(start, (), None, Q(t))
        return cls(-start, ((Interval(start, -start), Q(t)),), None, Q(t))

    @classmethod
    def identity(cls, total: bool = False) -> "TailedTranslation":
        return cls(ZERO, (), ZERO if total else None, ZERO)

    @classmethod
    def from_map(cls, pieces: Iterable[tuple], right_tail: Number | None = 0,
                 left_tail: Number | None = None, window: Number | None = None) -> "TailedTranslation":
        items = [(iv if isinstance(iv, Interval) else Interval(Q(iv[0]), Q(iv[1])), Q(t)) for iv, t in pieces]
        if window is None:
            ends = [abs(iv.lo) for iv, _ in items] + [abs(iv.hi) for iv, _ in items] + [ZERO]
            window = max_scalar(ends)
        return cls(Q(window), tuple(items), None if left_tail is None else Q(left_tail),
                   None if right_tail is None else Q(right_tail))

    # structure
    def domain(self) -> TailSet:
        return TailSet(IntervalSet(iv for iv, _ in self.pieces),
                       None if self.left_tail is None else -self.window,
                       None if self.right_tail is None else self.window)

    def range(self) -> TailSet:
        return TailSet(IntervalSet(iv.shift(t) for iv, t in self.pieces),
                       None if self.left_tail is None else -self.window + self.left_tail,
                       None if self.right_tail is None else self.window + self.right_tail)

    def validate(self) -> list[str]:
        problems = []
        M = self.window
        if M < 0:
            problems.append("negative window")
        for iv, _ in self.pieces:
            if iv.lo < -M or iv.hi > M:
                problems.append(f"piece [{iv.lo},{iv.hi}) outside the window")
        dom_len = ZERO
        for iv, _ in self.pieces:
            dom_len = dom_len + iv.length
        if IntervalSet(iv for iv, _ in self.pieces).measure() != dom_len:
            problems.append("piece domains overlap")
        images = [TailSet(IntervalSet._trusted((iv.shift(t),))) for iv, t in self.pieces]
        if self.left_tail is not None:
            images.append(TailSet(EMPTY, -M + self.left_tail, None))
        if self.right_tail is not None:
            images.append(TailSet(EMPTY, None, M + self.right_tail))
        acc = TailSet()
        for im in images:
            if not (acc & im).is_bounded() or (acc & im).core:
                problems.append("images overlap")
                break
            acc = acc | im
        return problems

    def is_valid(self) -> bool:
        return not self.validate()

    def apply(self, x: Number) -> Optional[QuadScalar]:
        x = Q(x)
        if x >= self.window:
            return None if self.right_tail is None else x + self.right_tail
        if x < -self.window:
            return None if self.left_tail is None else x + self.left_tail
        for iv, t in self.pieces:
            if iv.contains(x):
                return x + t
        return None

    def _window_rules(self, M: QuadScalar) -> list[tuple[Interval, QuadScalar]]:
        """Pieces over ``[-M, M)`` for ``M >= window``, tails written out as pieces."""
        rules = list(self.pieces)
        if M > self.window:
            if self.right_tail is not None:
                rules.append((Interval(self.window, M), self.right_tail))
            if self.left_tail is not None:
                rules.append((Interval(-M, -self.window), self.left_tail))
        return rules

    def inverse(self) -> "TailedTranslation":
        shifts = [abs(t) for _, t in self.pieces]
        for t in (self.left_tail, self.right_tail):
            if t is not None:
                shifts.append(abs(t))
        M = self.window + max_scalar(shifts)
        rules = [(iv.shift(t), -t) for iv, t in self._window_rules(M)]
        inner = []
        for iv, t in rules:
            part = IntervalSet._trusted((iv,)).clip(-M, M)
            inner.extend((p, t) for p in part)
        return TailedTranslation(M, tuple(inner),
                                 None if self.left_tail is None else -self.left_tail,
                                 None if self.right_tail is None else -self.right_tail)

    def to_json(self) -> dict:
        return {"window": self.window.to_json(),
                "pieces": [{"interval": iv.to_json(), "shift": t.to_json()} for iv, t in self.pieces],
                "tails": [None if self.left_tail is None else self.left_tail.to_json(),
                          None if self.right_tail is None else self.right_tail.to_json()]}

    @classmethod
    def from_json(cls, obj) -> "TailedTranslation":
        lt, rt = obj["tails"]
        return cls(QuadScalar.from_json(obj["window"]),
                   tuple((Interval.from_json(p["interval"]), QuadScalar.from_json(p["shift"])) for p in obj["pieces"]),
                   None if lt is None else QuadScalar.from_json(lt),
                   None if rt is None else QuadScalar.from_json(rt))


def _merge_pieces(items):
    out: list[tuple[Interval, QuadScalar]] = []
    for iv, t in items:
        if out and out[-1][0].hi == iv.lo and out[-1][1] == t:
            out[-1] = (Interval(out[-1][0].lo, iv.hi), t)
        else:
            out.append((iv, t))
    return out


def _reach(T: TailedTranslation) -> QuadScalar:
    shifts = [abs(t) for _, t in T.pieces]
    for t in (T.left_tail, T.right_tail):
        if t is not None:
            shifts.append(abs(t))
    return max_scalar(shifts)


def comm_compose(T1: TailedTranslation, T2: TailedTranslation) -> TailedTranslation:
    """``T1 ∘ T2`` on ``T2^{-1}(rng T2 ∩ dom T1)``."""
    r2 = _reach(T2)
    M = max_scalar([T2.window, T1.window + r2])
    rules1 = T1._window_rules(max_scalar([T1.window, M + r2]))
    out = []
    for iv, t2 in T2._window_rules(M):
        image = iv.shift(t2)
        for jv, t1 in rules1:
            lo = image.lo if image.lo > jv.lo else jv.lo
            hi = image.hi if image.hi < jv.hi else jv.hi
            if lo < hi:
                out.append((Interval(lo - t2, hi - t2), t1 + t2))
    left = None if T1.left_tail is None or T2.left_tail is None else T1.left_tail + T2.left_tail
    right = None if T1.right_tail is None or T2.right_tail is None else T1.right_tail + T2.right_tail
    return TailedTranslation(M, tuple(out), left, right)


def index_value(T: TailedTranslation) -> QuadScalar:
    """``λ(dom ∖ rng) − λ(rng ∖ dom)``."""
    dom, rng = T.domain(), T.range()
    a, b = dom - rng, rng - dom
    if not (a.is_bounded() and b.is_bounded()):
        raise NotCommensurate("domain and range are not commensurate")
    return a.measure() - b.measure()


comm_index = index_value


def ambient_index(T: TailedTranslation, A: TailSet) -> QuadScalar:
    """``λ(A ∖ rng) − λ(A ∖ dom)`` for an ambient set containing domain and range."""
    dom, rng = T.domain(), T.range()
    if not (dom.issubset(A) and rng.issubset(A)):
        raise ValueError("ambient set must contain domain and range")
    a, b = A - rng, A - dom
    if not (a.is_bounded() and b.is_bounded()):
        raise NotCommensurate("ambient set is not commensurate with the domain")
    return a.measure() - b.measure()


def comm_equivalent(T: TailedTranslation, S: TailedTranslation) -> bool:
    """True iff the two maps differ on a set of finite measure."""
    return T.left_tail == S.left_tail and T.right_tail == S.right_tail


def disagreement_set(T: TailedTranslation, S: TailedTranslation) -> TailSet:
    """Points where the maps differ (including where exactly one is defined)."""
    M = max_scalar([T.window, S.window]) + 1
    pts = set()
    for iv, _ in T._window_rules(M) + S._window_rules(M):
        pts.add(iv.lo)
        pts.add(iv.hi)
    pts.update([-M, M])
    cuts = sorted(pts)
    bad = []
    for lo, hi in zip(cuts, cuts[1:]):
        x = lo
        if T.apply(x) != S.apply(x):
            bad.append(Interval(lo, hi))
    return TailSet(IntervalSet(bad),
                   None if T.left_tail == S.left_tail else -M,
                   None if T.right_tail == S.right_tail else M)


def comm_restrict(T: TailedTranslation, A: TailSet) -> TailedTranslation:
    """``T`` restricted to a subset of its domain commensurate with the half-line."""
    if not A.commensurate_with_half_line():
        raise NotCommensurate("restriction set is not commensurate with [0, inf)")
    if not A.issubset(T.domain()):
        raise ValueError("restriction set must lie inside the domain")
    M = max_scalar([T.window, abs(A.right)] + [abs(b) for b in A.core.breakpoints()])
    out = []
    region = A.window_form(-M, M)
    for iv, t in T._window_rules(M):
        for part in region & IntervalSet._trusted((iv,)):
            out.append((part, t))
    return TailedTranslation(M, tuple(out), None, T.right_tail)


def charge_index(T: TailedTranslation) -> QuadScalar:
    """Net length of arcs ``x -> Tx`` crossing the basepoint 0 forward minus backward.

    Defined for bijections of the whole line (both tails present and equal); equals
    ``λ([0,inf) ∖ T[0,inf)) − λ(T[0,inf) ∖ [0,inf))``.
    """
    if T.left_tail is None or T.right_tail is None:
        raise ChargeDivergence("both tails are required: arcs must be defined on the whole line")
    if T.left_tail != T.right_tail:
        raise ChargeDivergence("net tail shift is nonzero: the crossing integral diverges")
    M = T.window + _reach(T) + 1
    total = ZERO
    for iv, t in T._window_rules(M):
        seg = IntervalSet._trusted((iv,))
        if t > 0:
            total = total + (seg & IntervalSet.span(-t, 0)).measure()
        elif t < 0:
            total = total - (seg & IntervalSet.span(0, -t)).measure()
    return total


def charge_index_by_sets(T: TailedTranslation) -> QuadScalar:
    """``λ(ℝ≥0 ∖ Tℝ≥0) − λ(Tℝ≥0 ∖ ℝ≥0)`` computed from set differences."""
    image = comm_restrict(T, HALF_LINE).range()
    return (HALF_LINE - image).measure() - (image - HALF_LINE).measure()


# --------------------------------------------------------------------------- seeded generators


def _random_length(rng: random.Random) -> QuadScalar:
    if rng.random() < 0.2:
        return ALPHA * rng.randint(1, 3)
    return Q(rng.randint(1, 8)) / rng.choice((1, 2, 3, 4, 6, 8))


def _place(lengths, order, start, rng):
    """Start points of the blocks laid out left to right in ``order`` with random gaps."""
    starts = {}
    pos = start
    for i in order:
        pos = pos + (Q(rng.randint(0, 2)) / 2 if rng.random() < 0.4 else ZERO)
        starts[i] = pos
        pos = pos + lengths[i]
    return starts, pos


def random_tailed(rng: random.Random, pieces: int = 4, bijective: bool = False) -> TailedTranslation:
    """Random valid map: blocks of a partition are laid out twice, in two orders.

    With ``bijective`` the blocks tile a window exactly on both sides and the whole line
    is mapped onto itself with equal tail shifts; otherwise the map is defined on a set
    commensurate with ``[0, inf)`` and has no left tail.
    """
    k = rng.randint(1, pieces)
    lengths = [_random_length(rng) for _ in range(k)]
    order = list(range(k))
    rng.shuffle(order)
    if bijective:
        width = sum(lengths, ZERO)
        tail = Q(rng.randint(-2, 2)) / 2
        lo = -(width / 2).floor() - 1
        dom_start, pos = lo, lo
        src = {}
        for i in range(k):
            src[i] = pos
            pos = pos + lengths[i]
        dst = {}
        pos = lo + tail
        for i in order:
            dst[i] = pos
            pos = pos + lengths[i]
        M = max_scalar([abs(lo), abs(lo + width)])
        items = [(Interval(src[i], src[i] + lengths[i]), dst[i] - src[i]) for i in range(k)]
        # pad so that the pieces tile [-M, M) and the tails take over outside
        if lo > -M:
            items.append((Interval(-M, lo), tail))
        if lo + width < M:
            items.append((Interval(lo + width, M), tail))
        return TailedTranslation(M, tuple(items), tail, tail)
    src, end_d = _place(lengths, list(range(k)), Q(rng.randint(-2, 2)), rng)
    dst, end_r = _place(lengths, order, Q(rng.randint(-2, 2)), rng)
    tail = end_r - end_d
    M = (max_scalar([abs(end_d), abs(end_r)] + [abs(v) for v in src.values()] + [abs(v) for v in dst.values()])).ceil() + 1
    items = [(Interval(src[i], src[i] + lengths[i]), dst[i] - src[i]) for i in range(k)]
    items.append((Interval(end_d, Q(M)), tail))
    return TailedTranslation(Q(M), tuple(items), None, tail)


def random_cofinite(rng: random.Random, T: TailedTranslation, holes: int = 2) -> TailSet:
    """Subset of ``dom T`` obtained by removing a few bounded intervals from it."""
    dom = T.domain()
    cut = []
    for _ in range(rng.randint(0, holes)):
        a = Q(rng.randint(-8, 2 * int(T.window.ceil()) + 4)) / 2
        cut.append(Interval(a, a + Q(rng.randint(1, 4)) / 4))
    return dom - TailSet(IntervalSet(cut))


def random_ambient(rng: random.Random, T: TailedTranslation) -> TailSet:
    """Set containing ``dom T ∪ rng T`` and commensurate with ``[0, inf)``."""
    base = T.domain() | T.range()
    extra = []
    for _ in range(rng.randint(0, 2)):
        a = Q(rng.randint(-10, 10)) / 2
        extra.append(Interval(a, a + Q(rng.randint(1, 4)) / 3))
    return base | TailSet(IntervalSet(extra))
