"""Step elements: finitely presented elements of the L1 full group of the flow.

A step element translates each of finitely many disjoint rectangles along the flow by a
fixed time and is the identity elsewhere.  It is stored canonically as a dict from
nonzero shift to the RectSet of points moved by that shift, so equality of elements is
equality of dicts.
"""
from __future__ import annotations

import random
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional

from .commensurator import TailedTranslation
from .exactnum import (
    ONE,
    ZERO,
    Interval,
    IntervalSet,
    Number,
    Q,
    QuadScalar,
    max_scalar,
    sum_scalars,
)
from .flow import (
    DEFAULT_FLOW,
    EMPTY_RECTS,
    FlowParams,
    FlowPoint,
    RectSet,
    Tessellation,
    fiber_profile,
    flow_by,
    flow_set,
    mu,
    phase_space,
    refine_profiles,
    segment_set,
)

DEFAULT_RETURN_CAP = 2 ** 10
RESIDUAL_WARNING = Q("1/1000000")


def union_all(sets: Iterable[RectSet]) -> RectSet:
    rects = [r for A in sets for r in A.rects()]
    return RectSet.from_rects(rects) if rects else EMPTY_RECTS


def _normalize(rules: Mapping, keep_zero: bool) -> dict[QuadScalar, RectSet]:
    out = {}
    for t, A in rules.items():
        t = Q(t)
        if isinstance(A, (list, tuple)):
            A = union_all(A)
        if A and (keep_zero or t):
            out[t] = A
    return dict(sorted(out.items()))


def _image(rules: Mapping[QuadScalar, RectSet], A: RectSet, params: FlowParams):
    """Image of ``A`` under the partial rules, and the part of ``A`` they do not cover."""
    parts = []
    rest = A
    for t, cells in rules.items():
        hit = A & cells
        if hit:
            parts.append(flow_set(hit, t, params))
            rest = rest - hit
    return union_all(parts), rest


# --------------------------------------------------------------------------- partial maps


@dataclass(frozen=True, eq=False)
class PartialMap:
    """Injective piecewise flow translation defined on ``domain()`` only.

    Zero shifts are kept: a point in the domain with shift 0 is mapped to itself, which
    is different from not being in the domain.
    """

    rules: dict
    params: FlowParams = DEFAULT_FLOW

    def __post_init__(self):
        object.__setattr__(self, "rules", _normalize(self.rules, keep_zero=True))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, PartialMap) and self.rules == other.rules and self.params == other.params

    def domain(self) -> RectSet:
        return union_all(self.rules.values())

    def range(self) -> RectSet:
        return union_all(flow_set(A, t, self.params) for t, A in self.rules.items())

    def image(self, A: RectSet) -> RectSet:
        return _image(self.rules, A, self.params)[0]

    def shift_at(self, x: FlowPoint) -> Optional[QuadScalar]:
        for t, A in self.rules.items():
            if A.contains(x):
                return t
        return None

    def apply(self, x: FlowPoint) -> Optional[FlowPoint]:
        t = self.shift_at(x)
        return None if t is None else flow_by(x, t, self.params)

    def restrict(self, A: RectSet) -> "PartialMap":
        return PartialMap({t: B & A for t, B in self.rules.items()}, self.params)

    def inverse(self) -> "PartialMap":
        return PartialMap({-t: flow_set(A, t, self.params) for t, A in self.rules.items()}, self.params)

    def then(self, outer: "PartialMap") -> "PartialMap":
        """``outer ∘ self`` on the points whose image lies in ``outer.domain()``."""
        out = defaultdict(list)
        for s, A in self.rules.items():
            img = flow_set(A, s, self.params)
            for t, B in outer.rules.items():
                hit = img & B
                if hit:
                    out[s + t].append(flow_set(hit, -s, self.params))
        return PartialMap(out, self.params)

    def union(self, other: "PartialMap") -> "PartialMap":
        out = defaultdict(list)
        for m in (self, other):
            for t, A in m.rules.items():
                out[t].append(A)
        return PartialMap(out, self.params)

    def is_injective(self) -> bool:
        seen = EMPTY_RECTS
        dom = EMPTY_RECTS
        for t, A in self.rules.items():
            if not A.isdisjoint(dom):
                return False
            dom = dom | A
            img = flow_set(A, t, self.params)
            if not img.isdisjoint(seen):
                return False
            seen = seen | img
        return True

    def norm_l1(self) -> QuadScalar:
        return sum_scalars(mu(A, self.params) * abs(t) for t, A in self.rules.items())

    def as_element(self) -> "StepElement":
        """Extend by the identity; only a bijection when domain and range coincide."""
        return StepElement(self.rules, self.params)

    def to_json(self) -> dict:
        return {"flow": self.params.to_json(), "pieces": _pieces_json(self.rules)}


def _pieces_json(rules) -> list:
    out = []
    for t, A in rules.items():
        for th, hs in A.rects():
            out.append({"base": [th.lo.to_json(), th.hi.to_json()],
                        "height": [hs.lo.to_json(), hs.hi.to_json()],
                        "shift": t.to_json()})
    return out


def _pieces_from_json(items) -> dict:
    from .exactnum import QuadScalar as _QS
    rules = defaultdict(list)
    for p in items:
        b0, b1 = (_QS.from_json(v) for v in p["base"])
        h0, h1 = (_QS.from_json(v) for v in p["height"])
        rules[_QS.from_json(p["shift"])].append(RectSet.rect(b0, b1, h0, h1))
    return rules


# --------------------------------------------------------------------------- step elements


@dataclass(frozen=True, eq=False)
class StepElement:
    """Finite piecewise flow translation, identity outside its cells."""

    rules: dict = field(default_factory=dict)
    params: FlowParams = DEFAULT_FLOW

    def __post_init__(self):
        object.__setattr__(self, "rules", _normalize(self.rules, keep_zero=False))
        object.__setattr__(self, "_support", None)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, StepElement) and self.rules == other.rules and self.params == other.params

    def __hash__(self) -> int:
        return hash(tuple(self.rules.items()))

    def __repr__(self) -> str:
        inner = ", ".join(f"{t.exact_str()}: {len(list(A.rects()))} rects" for t, A in self.rules.items())
        return f"StepElement({{{inner}}})"

    # construction ----------------------------------------------------------------

    @classmethod
    def identity(cls, params: FlowParams = DEFAULT_FLOW) -> "StepElement":
        return cls({}, params)

    @classmethod
    def from_pieces(cls, pieces: Iterable[tuple], params: FlowParams = DEFAULT_FLOW) -> "StepElement":
        """From ``(RectSet, shift)`` pairs."""
        rules = defaultdict(list)
        for A, t in pieces:
            rules[Q(t)].append(A)
        return cls(rules, params)

    # structure -------------------------------------------------------------------

    @property
    def support(self) -> RectSet:
        if self._support is None:
            object.__setattr__(self, "_support", union_all(self.rules.values()))
        return self._support

    def pieces(self) -> list[tuple[Interval, Interval, QuadScalar]]:
        return [(th, hs, t) for t, A in self.rules.items() for th, hs in A.rects()]

    def piece_count(self) -> int:
        return sum(A.rect_count() for A in self.rules.values())

    def validate(self) -> list[str]:
        """Exact audit of the bijection invariants; returns a list of violations."""
        problems = []
        p = self.params
        dom = EMPTY_RECTS
        rng = EMPTY_RECTS
        for t, A in self.rules.items():
            if not A.issubset(phase_space(p)):
                problems.append(f"cells for shift {t.exact_str()} leave the phase space")
            if not A.isdisjoint(dom):
                problems.append(f"cells for shift {t.exact_str()} overlap earlier cells")
            img = flow_set(A, t, p)
            if not img.isdisjoint(rng):
                problems.append(f"image of shift {t.exact_str()} overlaps earlier images")
            dom = dom | A
            rng = rng | img
        if dom != rng:
            problems.append("union of images differs from union of cells")
        return problems

    def is_valid(self) -> bool:
        return not self.validate()

    # evaluation ------------------------------------------------------------------

    def cocycle(self, x: FlowPoint) -> QuadScalar:
        for t, A in self.rules.items():
            if A.contains(x):
                return t
        return ZERO

    def apply(self, x: FlowPoint) -> FlowPoint:
        return flow_by(x, self.cocycle(x), self.params)

    def image(self, A: RectSet) -> RectSet:
        moved, rest = _image(self.rules, A, self.params)
        return moved | rest

    def restrict(self, A: RectSet) -> PartialMap:
        """Partial map ``T`` on ``A`` (zero shift off the support)."""
        rules = {t: B & A for t, B in self.rules.items()}
        fixed = A - self.support
        if fixed:
            rules[ZERO] = fixed
        return PartialMap(rules, self.params)

    def as_partial(self) -> PartialMap:
        return PartialMap(self.rules, self.params)

    # group operations --------------------------------------------------------------

    def compose(self, other: "StepElement") -> "StepElement":
        """``self ∘ other``."""
        p = self.params
        out = defaultdict(list)
        for s, R in other.rules.items():
            img = flow_set(R, s, p)
            rest = img
            for t, cells in self.rules.items():
                hit = img & cells
                if hit:
                    out[s + t].append(flow_set(hit, -s, p))
                    rest = rest - hit
            if rest:
                out[s].append(flow_set(rest, -s, p))
        osup = other.support
        for t, cells in self.rules.items():
            free = cells - osup
            if free:
                out[t].append(free)
        return StepElement(out, p)

    __mul__ = compose

    def inverse(self) -> "StepElement":
        return StepElement({-t: flow_set(A, t, self.params) for t, A in self.rules.items()}, self.params)

    def power(self, n: int) -> "StepElement":
        base = self if n >= 0 else self.inverse()
        n = abs(n)
        result = StepElement.identity(self.params)
        while n:
            if n & 1:
                result = result.compose(base)
            base = base.compose(base)
            n >>= 1
        return result

    def commutator(self, other: "StepElement") -> "StepElement":
        return self.compose(other).compose(self.inverse()).compose(other.inverse())

    # invariants ------------------------------------------------------------------

    def norm_l1(self) -> QuadScalar:
        return sum_scalars(mu(A, self.params) * abs(t) for t, A in self.rules.items())

    def index(self) -> QuadScalar:
        return sum_scalars(mu(A, self.params) * t for t, A in self.rules.items())

    def max_shift(self) -> QuadScalar:
        return max_scalar((abs(t) for t in self.rules), default=ZERO)

    def cocycle_integral(self, A: RectSet, absolute: bool = True) -> QuadScalar:
        """``∫_A |ρ_T|`` (or the signed integral)."""
        return sum_scalars(mu(B & A, self.params) * (abs(t) if absolute else t) for t, B in self.rules.items())

    # serialization ---------------------------------------------------------------

    def to_json(self) -> dict:
        return {"flow": self.params.to_json(), "pieces": _pieces_json(self.rules)}

    @classmethod
    def from_json(cls, obj) -> "StepElement":
        params = FlowParams.from_json(obj["flow"]) if "flow" in obj else DEFAULT_FLOW
        return cls(_pieces_from_json(obj["pieces"]), params)


def cocycle_distance(T: StepElement | PartialMap, S: StepElement | PartialMap, A: RectSet | None = None) -> QuadScalar:
    """``∫_A D(Tx, Sx) dμ = ∫_A |ρ_T - ρ_S|`` (both maps move points along orbits)."""
    p = T.params
    if A is None:
        A = T_support(T) | T_support(S)
    total = ZERO
    t_rules = dict(T.rules)
    s_rules = dict(S.rules)
    t_rest = A
    for t, B in t_rules.items():
        Bt = B & A
        if not Bt:
            continue
        t_rest = t_rest - Bt
        covered = EMPTY_RECTS
        for s, Cs in s_rules.items():
            hit = Bt & Cs
            if hit:
                covered = covered | hit
                total = total + mu(hit, p) * abs(t - s)
        total = total + mu(Bt - covered, p) * abs(t)
    for s, Cs in s_rules.items():
        total = total + mu(Cs & t_rest, p) * abs(s)
    return total


def T_support(m: StepElement | PartialMap) -> RectSet:
    return union_all(A for t, A in m.rules.items() if t)


# --------------------------------------------------------------------------- builders


def flow_element(t: Number, params: FlowParams = DEFAULT_FLOW) -> StepElement:
    """The time-``t`` map of the flow as a step element."""
    return StepElement({Q(t): phase_space(params)}, params)


def cell_rotation(tess: Tessellation, fraction: Number = Q("1/3")) -> StepElement:
    """Rotate every cell ``[lo, hi)`` of the tessellation by ``fraction`` of its length."""
    f = Q(fraction)
    if not 0 <= f < 1:
        raise ValueError("fraction must lie in [0,1)")
    p = tess.params
    rules = defaultdict(list)
    for iv, lo, hi in tess.window_partition():
        base = IntervalSet._trusted((iv,))
        g = hi - lo
        cut = hi - g * f
        rules[g * f].append(segment_set(base, lo, cut, p))
        rules[g * f - g].append(segment_set(base, cut, hi, p))
    return StepElement(rules, p)


def swap_element(A: RectSet, t: Number, params: FlowParams = DEFAULT_FLOW) -> StepElement:
    """Exchange ``A`` with ``A + t``; they must be disjoint."""
    t = Q(t)
    B = flow_set(A, t, params)
    if not A.isdisjoint(B):
        raise ValueError("swap requires A and A + t to be disjoint")
    return StepElement({t: A, -t: B}, params)


def cycle_element(A: RectSet, shifts: Iterable[Number], params: FlowParams = DEFAULT_FLOW) -> StepElement:
    """Cycle ``A -> A+t1 -> A+t1+t2 -> ... -> A``; all translates must be disjoint."""
    offs = [ZERO]
    for t in shifts:
        offs.append(offs[-1] + Q(t))
    sets = [flow_set(A, o, params) for o in offs]
    for i in range(len(sets)):
        for j in range(i):
            if not sets[i].isdisjoint(sets[j]):
                raise ValueError("cycle translates overlap")
    rules = defaultdict(list)
    for i, S in enumerate(sets):
        nxt = offs[(i + 1) % len(offs)]
        rules[nxt - offs[i]].append(S)
    return StepElement(rules, params)


def height_exchange(thetas: IntervalSet, lo: Number, lengths: Iterable[Number], order: Iterable[int],
                    params: FlowParams = DEFAULT_FLOW) -> StepElement:
    """Interval exchange along the orbit segment ``thetas x [lo, lo + sum(lengths))``.

    The blocks of the given lengths are laid out again in the permuted ``order``.
    """
    lengths = [Q(x) for x in lengths]
    order = list(order)
    lo = Q(lo)
    total = sum(lengths, ZERO)
    if segment_set(thetas, lo, lo + total, params).area() != thetas.measure() * total:
        raise ValueError("orbit segment overlaps itself after wrapping")
    starts = [lo]
    for x in lengths:
        starts.append(starts[-1] + x)
    new_start = {}
    pos = lo
    for i in order:
        new_start[i] = pos
        pos = pos + lengths[i]
    rules = defaultdict(list)
    for i, x in enumerate(lengths):
        rules[new_start[i] - starts[i]].append(segment_set(thetas, starts[i], starts[i] + x, params))
    return StepElement(rules, params)


def segment_rotation(thetas: IntervalSet, lo: Number, length: Number, step: Number,
                     params: FlowParams = DEFAULT_FLOW) -> StepElement:
    """Rotate the orbit segment ``thetas x [lo, lo+length)`` by ``step`` (mod length)."""
    length, step = Q(length), Q(step)
    return height_exchange(thetas, lo, [length - step, step], [1, 0], params)


def lane_element(lanes: Iterable[tuple[IntervalSet, Number]], params: FlowParams = DEFAULT_FLOW) -> StepElement:
    """Translate each full-width band of heights by its shift.

    A band ``[0,1) x S`` is invariant under a shift ``t`` when ``S`` is invariant under
    ``s -> s + t mod h``; integer multiples of the roof always qualify.
    """
    rules = defaultdict(list)
    for heights, t in lanes:
        rules[Q(t)].append(RectSet.product(IntervalSet.span(0, 1), heights))
    return StepElement(rules, params)


def return_lane(base: IntervalSet, heights: IntervalSet, direction: int = 1,
                params: FlowParams = DEFAULT_FLOW) -> StepElement:
    """Move ``base x heights`` to the next (or previous) visit of the same band over ``base``."""
    from .flow import backward_returns, build_cross_section
    C = build_cross_section(base, params)
    pieces = C.returns if direction > 0 else backward_returns(C)
    rules = defaultdict(list)
    for iv, k in pieces:
        rules[params.roof * k * direction].append(RectSet.product(IntervalSet._trusted((iv,)), heights))
    return StepElement(rules, params)


def random_element(rng: random.Random, params: FlowParams = DEFAULT_FLOW, moves: int = 2,
                   allow_flow: bool = True, denominators: tuple = (2, 3, 4, 6, 8)) -> StepElement:
    """Seeded product of swaps, 3-cycles, height exchanges and flow maps."""
    T = StepElement.identity(params)
    kinds = ["swap", "cycle", "exchange", "flow"] if allow_flow else ["swap", "cycle", "exchange"]
    done = 0
    while done < moves:
        try:
            S = _random_move(rng, rng.choice(kinds), params, denominators)
        except ValueError:
            continue  # overlapping translates; draw again
        T = S.compose(T)
        done += 1
    return T


def _random_move(rng: random.Random, kind: str, params: FlowParams, denominators: tuple) -> StepElement:
    h = params.roof
    d = rng.choice(denominators)
    a = Q(rng.randrange(d)) / d
    th = IntervalSet.span(a, a + Q(rng.randint(1, 2)) / (2 * d))
    L = h * Q(rng.randint(1, 3)) / rng.choice((2, 3, 4))
    u = h * Q(rng.randrange(4)) / 4
    if kind == "swap":
        return swap_element(segment_set(th, u, u + L, params), L + h * rng.randrange(2), params)
    if kind == "cycle":
        return cycle_element(segment_set(th, u, u + L, params), [L, L], params)
    if kind == "exchange":
        order = [0, 1, 2]
        rng.shuffle(order)
        return height_exchange(th, u, [L / 2, L / 3, L / 6], order, params)
    return flow_element(h * Q(rng.randint(-4, 4)) / 4, params)


# --------------------------------------------------------------------------- first-return engine


@dataclass
class ReturnResult:
    """Outcome of a capped first-hit search: resolved pieces, residual and their sizes."""

    hits: list  # (steps, cumulative shift, origins)
    residual: RectSet
    params: FlowParams
    cap: int

    @property
    def residual_measure(self) -> QuadScalar:
        return mu(self.residual, self.params)

    def resolved(self) -> RectSet:
        return union_all(O for _, _, O in self.hits)

    def partial(self) -> PartialMap:
        rules = defaultdict(list)
        for _, sigma, O in self.hits:
            rules[sigma].append(O)
        return PartialMap(rules, self.params)

    def element(self) -> StepElement:
        """Resolved map extended by the identity (flagged when the residual is non-empty)."""
        return self.partial().as_element()

    def levels(self) -> dict[int, RectSet]:
        out = defaultdict(list)
        for n, _, O in self.hits:
            out[n].append(O)
        return {n: union_all(v) for n, v in sorted(out.items())}


def first_hits(T: StepElement, start: RectSet, accept: Callable, cap: int = DEFAULT_RETURN_CAP,
               include_zero: bool = False) -> ReturnResult:
    """Follow the T-orbits of ``start`` until ``accept(n, sigma, origins)`` claims them.

    The frontier maps cumulative shift to the set of origins that have travelled it, so
    each iteration costs one flow translation per distinct shift.  Origins whose current
    position is fixed by T and not accepted can never move again and go to the residual.
    """
    p = T.params
    hits = []
    residual = []
    frontier = {ZERO: start} if start else {}
    if include_zero and frontier:
        acc = accept(0, ZERO, start)
        if acc:
            hits.append((0, ZERO, acc))
            rest = start - acc
            frontier = {ZERO: rest} if rest else {}
    sup = T.support
    for n in range(1, cap + 1):
        if not frontier:
            break
        moved = defaultdict(list)
        frozen = defaultdict(list)
        for sigma, O in frontier.items():
            pos = flow_set(O, sigma, p)
            for t, cells in T.rules.items():
                hit = pos & cells
                if hit:
                    moved[sigma + t].append(flow_set(hit, -sigma, p))
            still = pos - sup
            if still:
                frozen[sigma].append(flow_set(still, -sigma, p))
        frontier = {}
        for sigma, group in moved.items():
            O = union_all(group)
            acc = accept(n, sigma, O)
            if acc:
                hits.append((n, sigma, acc))
                O = O - acc
            if O:
                frontier[sigma] = O
        for sigma, group in frozen.items():
            O = union_all(group)
            acc = accept(n, sigma, O)
            if acc:
                hits.append((n, sigma, acc))
                O = O - acc
            if O:
                residual.append(O)
    residual.extend(frontier.values())
    res = ReturnResult(hits, union_all(residual), p, cap)
    if res.residual_measure > RESIDUAL_WARNING:
        warnings.warn(f"first-return search left residual of measure {res.residual_measure.display()} at cap {cap}",
                      stacklevel=2)
    return res


def induced(T: StepElement, A: RectSet, cap: int = DEFAULT_RETURN_CAP) -> ReturnResult:
    """First-return map ``T_A`` of ``T`` to ``A``."""
    p = T.params

    def accept(n, sigma, O):
        return O & flow_set(A, -sigma, p)

    return first_hits(T, A, accept, cap)


def same_cell_set(tess: Tessellation, sigma: QuadScalar) -> RectSet:
    """Points ``x`` with ``x + sigma`` in the cell of ``x``."""
    p = tess.params
    parts = []
    for iv, lo, hi in tess.window_partition():
        a = lo if lo > lo - sigma else lo - sigma
        b = hi if hi < hi - sigma else hi - sigma
        if a < b:
            parts.append(segment_set(IntervalSet._trusted((iv,)), a, b, p))
    return union_all(parts)


def intermitted(T: StepElement, tess: Tessellation, cap: int = DEFAULT_RETURN_CAP) -> ReturnResult:
    """``T_{R_C}``: first return of the T-orbit to the cell of the starting point."""
    cache: dict = {}

    def accept(n, sigma, O):
        S = cache.get(sigma)
        if S is None:
            S = cache[sigma] = same_cell_set(tess, sigma)
        return O & S

    return first_hits(T, T.support, accept, cap)


def differ_set(T: StepElement, S: StepElement) -> RectSet:
    """``{x : Tx != Sx}``."""
    out = []
    for t, A in T.rules.items():
        out.append(A - S.rules.get(t, EMPTY_RECTS))
    for s, B in S.rules.items():
        out.append(B - T.rules.get(s, EMPTY_RECTS))
    return union_all(out)


def periodic_part(T: StepElement, cap: int = DEFAULT_RETURN_CAP) -> ReturnResult:
    """Points of ``supp T`` whose orbit closes up within ``cap`` steps (hits carry the period)."""
    def accept(n, sigma, O):
        return O if sigma == 0 else EMPTY_RECTS

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return first_hits(T, T.support, accept, cap)


def restrict_to_invariant(T: StepElement, A: RectSet) -> StepElement:
    """``T`` on a T-invariant set ``A``, identity elsewhere."""
    return StepElement({t: B & A for t, B in T.rules.items()}, T.params)


def largest_invariant_subset(T: StepElement, A: RectSet, cap: int = 64) -> tuple[RectSet, bool]:
    """Shrink ``A`` to ``A ∩ T⁻¹A ∩ TA`` until stable; the flag says whether it stabilised."""
    Tinv = T.inverse()
    for _ in range(cap):
        B = A & Tinv.image(A) & T.image(A)
        if B == A:
            return A, True
        A = B
    return A, False


# --------------------------------------------------------------------------- evasive split


@dataclass(frozen=True)
class MonotoneCertificate:
    forward: RectSet  # certified positive evasive set
    backward: RectSet
    uncertified: RectSet

    @property
    def ok(self) -> bool:
        return not self.uncertified


def monotone_certificate(T: StepElement, cap: int = 64) -> MonotoneCertificate:
    """Certify the evasive split from the sign of the cocycle.

    The positive (negative) evasive set is taken as the largest T-invariant set on which
    the cocycle is positive (negative); on it every orbit moves by at least the smallest
    positive shift per step and so escapes to infinity.
    """
    pos = union_all(A for t, A in T.rules.items() if t > 0)
    neg = union_all(A for t, A in T.rules.items() if t < 0)
    fwd, _ = largest_invariant_subset(T, pos, cap)
    bwd, _ = largest_invariant_subset(T, neg, cap)
    return MonotoneCertificate(fwd, bwd, T.support - fwd - bwd)


# --------------------------------------------------------------------------- arrival / departure


@dataclass
class ArrivalDeparture:
    arrival: RectSet
    departure: RectSet
    arrival_forward: RectSet
    arrival_backward: RectSet
    departure_forward: RectSet
    departure_backward: RectSet
    transfer_levels: list  # (origins in A_C, steps n, cumulative shift)
    residual: RectSet
    monotone: MonotoneCertificate
    params: FlowParams

    @property
    def residual_measure(self) -> QuadScalar:
        return mu(self.residual, self.params)

    def transfer(self) -> PartialMap:
        """``tau_C``: arrival set onto departure set."""
        rules = defaultdict(list)
        for O, n, sigma in self.transfer_levels:
            rules[sigma].append(O)
        return PartialMap(rules, self.params)

    def level(self, n: int) -> RectSet:
        return union_all(O for O, m, _ in self.transfer_levels if m == n)

    def max_level(self) -> int:
        return max((n for _, n, _ in self.transfer_levels), default=0)


def departure_set(T: StepElement, tess: Tessellation) -> RectSet:
    """Points of supp T whose image lies in another cell."""
    return union_all(A - same_cell_set(tess, t) for t, A in T.rules.items())


def arrival_set(T: StepElement, tess: Tessellation) -> RectSet:
    """Points of supp T whose preimage lies in another cell."""
    return departure_set(T.inverse(), tess)


def arrival_departure(T: StepElement, tess: Tessellation, cap: int = DEFAULT_RETURN_CAP) -> ArrivalDeparture:
    cert = monotone_certificate(T)
    if not cert.ok:
        warnings.warn("input is not certified monotone; evasive splits are partial", stacklevel=2)
    A = arrival_set(T, tess)
    D = departure_set(T, tess)
    p = T.params

    def accept(n, sigma, O):
        return O & flow_set(D, -sigma, p)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = first_hits(T, A, accept, cap, include_zero=True)
    levels = sorted(((O, n, sigma) for n, sigma, O in res.hits), key=lambda w: (w[1], w[2]))
    return ArrivalDeparture(
        arrival=A, departure=D,
        arrival_forward=A & cert.forward, arrival_backward=A & cert.backward,
        departure_forward=D & cert.forward, departure_backward=D & cert.backward,
        transfer_levels=levels, residual=res.residual, monotone=cert, params=p)


# --------------------------------------------------------------------------- fiber transport


class FiberMismatch(ValueError):
    pass


def _match_offsets(E: IntervalSet, F: IntervalSet) -> list[tuple[Interval, QuadScalar]]:
    """Order-preserving measure matching of two equal-measure interval sets."""
    out = []
    es, fs = list(E), list(F)
    i = j = 0
    e_pos = es[0].lo if es else ZERO
    f_pos = fs[0].lo if fs else ZERO
    while i < len(es) and j < len(fs):
        e_len = es[i].hi - e_pos
        f_len = fs[j].hi - f_pos
        step = e_len if e_len < f_len else f_len
        out.append((Interval(e_pos, e_pos + step), f_pos - e_pos))
        e_pos, f_pos = e_pos + step, f_pos + step
        if e_pos == es[i].hi:
            i += 1
            if i < len(es):
                e_pos = es[i].lo
        if f_pos == fs[j].hi:
            j += 1
            if j < len(fs):
                f_pos = fs[j].lo
    return out


def transport_from_profiles(pairs, params: FlowParams) -> PartialMap:
    """Partial map from ``(base piece, E offsets, F offsets)`` triples."""
    rules = defaultdict(list)
    for iv, E, F in pairs:
        if E.measure() != F.measure():
            raise FiberMismatch(f"fiber measures differ on [{iv.lo.display()}, {iv.hi.display()})")
        base = IntervalSet._trusted((iv,))
        for part, t in _match_offsets(E, F):
            rules[t].append(segment_set(base, part.lo, part.hi, params))
    return PartialMap(rules, params)


def fiber_transport(E: RectSet, F: RectSet, tess: Tessellation) -> PartialMap:
    """Cell-preserving, order-preserving translation of ``E`` onto ``F``."""
    prof = refine_profiles(fiber_profile(E, tess), fiber_profile(F, tess))
    return transport_from_profiles([(iv, e, f) for iv, (e, f) in prof], tess.params)


def transport_element(E: RectSet, F: RectSet, tess: Tessellation) -> StepElement:
    """Bijection of ``E ∪ F`` extending the transport E→F by the transport back from F∖E to E∖F."""
    fwd = fiber_transport(E - F, F - E, tess)
    back = fiber_transport(F - E, E - F, tess)
    return fwd.union(back).as_element()


# --------------------------------------------------------------------------- Hopf decomposition


@dataclass
class HopfVerdict:
    dissipative: RectSet
    conservative: RectSet
    undecided: RectSet
    horizon: int

    def to_json(self) -> dict:
        return {k: getattr(self, k).to_json() for k in ("dissipative", "conservative", "undecided")} | {
            "horizon": self.horizon}


def hopf(T: StepElement, tess: Tessellation, horizon: int = 64) -> HopfVerdict:
    """Certified Hopf split of ``supp T``.

    Conservative: points on cycles closing within the horizon, and the largest invariant
    set on which T never leaves the current cell (such orbits stay in one bounded cell).
    Dissipative: the certified monotone evasive sets (orbits drift away monotonically).
    """
    sup = T.support
    cyc = periodic_part(T, horizon).resolved()
    stay = union_all(A & same_cell_set(tess, t) for t, A in T.rules.items())
    trapped, _ = largest_invariant_subset(T, stay, horizon)
    conservative = cyc | trapped
    cert = monotone_certificate(T, horizon)
    dissipative = (cert.forward | cert.backward) - conservative
    return HopfVerdict(dissipative, conservative, sup - conservative - dissipative, horizon)


# --------------------------------------------------------------------------- periodic decompositions


class AperiodicInput(ValueError):
    pass


def _fundamental_domain(T: StepElement, P: RectSet, n: int) -> RectSet:
    """Points of a period-n invariant set that lie earliest (along the orbit) in their cycle."""
    p = T.params
    cur = {ZERO: P}
    keep = P
    for _ in range(1, n):
        nxt = defaultdict(list)
        for sigma, O in cur.items():
            pos = flow_set(O, sigma, p)
            for t, cells in T.rules.items():
                hit = pos & cells
                if hit:
                    nxt[sigma + t].append(flow_set(hit, -sigma, p))
        cur = {s: union_all(v) for s, v in nxt.items()}
        for s, O in cur.items():
            if s <= 0:
                keep = keep - O
    return keep


def periodic_decompositions(T: StepElement, cap: int = 256) -> tuple[StepElement, StepElement]:
    """Involutions ``U, V`` with ``T = U ∘ V`` for a periodic step element.

    On a cycle ``x_0 -> ... -> x_{n-1}`` (``x_0`` earliest along the orbit),
    ``V x_i = x_{-i}`` and ``U x_i = x_{1-i}`` (indices mod n).
    """
    res = periodic_part(T, cap)
    if res.residual:
        raise AperiodicInput(f"orbits of measure {res.residual_measure.display()} do not close within {cap} steps")
    by_period = defaultdict(list)
    for n, _, O in res.hits:
        by_period[n].append(O)
    p = T.params
    U_rules, V_rules = defaultdict(list), defaultdict(list)
    for n, group in sorted(by_period.items()):
        P = union_all(group)
        F = _fundamental_domain(T, P, n)
        powers = [StepElement.identity(p)]
        for _ in range(n):
            powers.append(powers[-1].compose(T))
        level = F
        for i in range(n):
            for target, rules in (((-i) % n, V_rules), ((1 - i) % n, U_rules)):
                k = (target - i) % n
                part = powers[k].restrict(level)
                for t, A in part.rules.items():
                    rules[t].append(A)
            level = T.image(level)
    return StepElement(U_rules, p), StepElement(V_rules, p)


def involution_three_cycles(I: StepElement) -> tuple[StepElement, StepElement]:
    """Two 3-cycles ``A, B`` with ``A ∘ B = I`` for an involution ``I``.

    Every moved rectangle ``R`` (positive shift ``t``) is cut into lower and upper halves
    ``R1, R3``; with ``R2 = R1 + t`` and ``R4 = R3 + t`` the involution is (12)(34) and
    equals (123)(423).
    """
    if I.compose(I) != StepElement.identity(I.params):
        raise ValueError("input is not an involution")
    p = I.params
    A_rules, B_rules = defaultdict(list), defaultdict(list)
    for t, cells in I.rules.items():
        if t <= 0:
            continue
        for th, hs in cells.rects():
            half = hs.length / 2
            R1 = RectSet.rect(th.lo, th.hi, hs.lo, hs.lo + half)
            R3 = RectSet.rect(th.lo, th.hi, hs.lo + half, hs.hi)
            R2 = flow_set(R1, t, p)
            R4 = flow_set(R3, t, p)
            # (123): R1 -> R2 -> R3 -> R1
            A_rules[t].append(R1)
            A_rules[half - t].append(R2)
            A_rules[-half].append(R3)
            # (423): R4 -> R2 -> R3 -> R4
            B_rules[-half].append(R4)
            B_rules[half - t].append(R2)
            B_rules[t].append(R3)
    return StepElement(A_rules, p), StepElement(B_rules, p)


# --------------------------------------------------------------------------- export to one orbit


def orbit_export(T: StepElement, theta0: Number = 0, radius: Number = 8) -> TailedTranslation:
    """Restrict ``T`` to the orbit of ``(theta0, 0)`` near time 0, as a map of the line.

    On ``[-R, R)`` the map agrees with ``T`` wherever the image also lies in the window;
    the points leaving the window are matched in order with the window points whose
    preimage lies outside, and the map is the identity beyond the window.
    """
    p = T.params
    h, alpha = p.roof, p.alpha
    theta0, R = Q(theta0), Q(radius)
    R = h * (R / h).ceil()
    inside, leaving, arriving = [], [], []
    for k in range((-R / h).floor(), (R / h).ceil()):
        th = (theta0 + alpha * k).frac()
        col_lo = h * k
        covered = IntervalSet.span(0, h)
        for t, A in T.rules.items():
            for part in A.column(th):
                covered = covered - IntervalSet._trusted((part,))
                lo, hi = part.lo + col_lo, part.hi + col_lo
                # image inside the window?
                ilo, ihi = lo + t, hi + t
                a = ilo if ilo > -R else -R
                b = ihi if ihi < R else R
                if a < b:
                    inside.append((Interval(a - t, b - t), t))
                for x0, x1 in ((lo, hi if hi < -R - t else -R - t), (lo if lo > R - t else R - t, hi)):
                    if x0 < x1:
                        leaving.append(Interval(x0, x1))
        for part in covered:
            inside.append((part.shift(col_lo), ZERO))
    img_inside = IntervalSet(iv.shift(t) for iv, t in inside)
    arrive = IntervalSet.span(-R, R) - img_inside
    for part, t in _match_offsets(IntervalSet(leaving), arrive):
        inside.append((part, t))
    return TailedTranslation.from_map(inside, right_tail=0, left_tail=0, window=R)
