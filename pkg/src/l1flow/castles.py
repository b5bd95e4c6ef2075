"""Castles (partial maps whose orbits are finite segments) and a cutting-and-stacking
construction of a bounded element that wiggles along every orbit.

Concrete geometry: roof 5/2 and the section ``C_1 = [0,1) x {0}`` (every gap is 5/2).
The nested sections are ``C_n = [0, l_n) x {0}`` with ``l_1 = 1`` and ``l_n = 2^-n / 2``
afterwards.  With this roof, ``D_1 = C_1 + 2`` and ``D_n`` is the part of ``D_1`` whose
next section point ``d + 1/2`` lies in ``C_n``; that is the column set ``b_n - alpha``
at height 2.
"""
from __future__ import annotations

import random
from bisect import bisect_right
from collections import defaultdict
from dataclasses import dataclass, field

from .exactnum import ONE, ZERO, Interval, IntervalSet, Number, Q, QuadScalar, circle_translate, max_scalar
from .flow import (
    FlowParams,
    FlowPoint,
    RectSet,
    Tessellation,
    build_cross_section,
    fiber_profile,
    flow_by,
    refine_profiles,
    flow_set,
    mu,
    segment_set,
)
from .fullgroup import EMPTY_RECTS, PartialMap, StepElement, union_all

THM61_ROOF = Q("5/2")
DEFAULT_MAX_LEVEL = 8


# --------------------------------------------------------------------------- castles


@dataclass
class CastleReport:
    basis: RectSet
    ceiling: RectSet
    height: int
    levels: list
    problems: list

    @property
    def ok(self) -> bool:
        return not self.problems


def castle_validate(phi: PartialMap, cap: int = 2 ** 16) -> CastleReport:
    """Audit that the iterates of the basis are disjoint and cover the support."""
    problems = []
    if not phi.is_injective():
        problems.append("map is not injective")
    dom, rng = phi.domain(), phi.range()
    basis, ceiling = dom - rng, rng - dom
    levels = []
    seen = EMPTY_RECTS
    cur = basis
    while cur:
        if len(levels) >= cap:
            problems.append(f"tower taller than {cap}")
            break
        if not cur.isdisjoint(seen):
            problems.append(f"level {len(levels)} meets an earlier level")
            break
        levels.append(cur)
        seen = seen | cur
        cur = phi.image(cur & dom)
    if seen != (dom | rng):
        problems.append("iterates of the basis do not cover the support")
    return CastleReport(basis, ceiling, len(levels), levels, problems)


def vec_phi(phi: PartialMap, cap: int = 2 ** 16) -> PartialMap:
    """Basis-to-ceiling map: compose the pieces along each tower column."""
    p = phi.params
    dom, rng = phi.domain(), phi.range()
    frontier = {ZERO: dom - rng}
    out = defaultdict(list)
    for _ in range(cap + 1):
        if not frontier:
            break
        nxt = defaultdict(list)
        for sigma, O in frontier.items():
            pos = flow_set(O, sigma, p)
            top = pos - dom
            if top:
                out[sigma].append(flow_set(top, -sigma, p))
            for t, A in phi.rules.items():
                hit = pos & A
                if hit:
                    nxt[sigma + t].append(flow_set(hit, -sigma, p))
        frontier = {s: union_all(v) for s, v in nxt.items()}
    else:
        raise RuntimeError("castle columns did not terminate")
    return PartialMap(out, p)


def castle_support(phi: PartialMap) -> RectSet:
    return phi.domain() | phi.range()


def saturation(phi: PartialMap, A: RectSet, cap: int = 2 ** 16) -> RectSet:
    """Forward iterates of ``A`` under ``phi`` (including ``A``)."""
    dom = phi.domain()
    out, cur = A, A
    for _ in range(cap):
        cur = phi.image(cur & dom)
        if not cur:
            return out
        out = out | cur
    raise RuntimeError("saturation did not terminate")


# --------------------------------------------------------------------------- construction


def default_bases(levels: int) -> list[QuadScalar]:
    """Lengths ``l_n`` of the nested section bases ``[0, l_n)``."""
    return [ONE] + [Q(1) / 2 ** (n + 1) for n in range(2, levels + 2)]


@dataclass
class Thm61Level:
    n: int
    base: IntervalSet  # b_n: C_n = b_n x {0}
    phi: PartialMap
    psi: PartialMap
    sets: dict = field(default_factory=dict)
    maps: dict = field(default_factory=dict)


@dataclass
class Thm61State:
    params: FlowParams
    levels: list  # Thm61Level for n = 1..N
    phi_closed: PartialMap  # phi_N with its ceiling glued to its basis, plus the glued psi_N
    S: StepElement
    Y: RectSet
    Z: RectSet
    Zp: RectSet
    eta: PartialMap
    substitute_measure: QuadScalar

    @property
    def top(self) -> int:
        return len(self.levels)

    def level(self, n: int) -> Thm61Level:
        return self.levels[n - 1]

    def to_json(self) -> dict:
        return {"levels": self.top, "flow": self.params.to_json(),
                "bases": [lv.base.to_json() for lv in self.levels],
                "S": self.S.to_json(),
                "substitute_measure": self.substitute_measure.to_json()}


def _seg(base: IntervalSet, lo, hi, p: FlowParams) -> RectSet:
    return segment_set(base, Q(lo), Q(hi), p)


def _level_sets(base: IntervalSet, n: int, p: FlowParams) -> dict:
    """Displayed bases and ceilings at level ``n`` (offsets from ``C_n`` or ``D_n``)."""
    a = p.alpha
    dbase = circle_translate(base, -a)  # columns of D_n
    w = Q(1) / 2 ** n
    w2 = w / 2
    half = Q(1) / 2

    def dseg(lo, hi):  # D_n + [lo, hi)
        return _seg(dbase, 2 + lo, 2 + hi, p)

    return {
        "A": _seg(base, 0, w, p),
        "B": dseg(-half - w, -half),
        "C": dseg(-half, -half + w),
        "D": _seg(base, half, half + w, p),
        "A1": _seg(base, 0, w2, p),
        "A0": _seg(base, w2, w, p),
        "B0": dseg(-half - w, -half - w2),
        "B1": dseg(-half - w2, -half),
        "C0": dseg(-half + w2, -half + w),
        "C1": dseg(-half, -half + w2),
        "D0": _seg(base, half + w2, half + w, p),
        "D1": _seg(base, half, half + w2, p),
    }


def build_thm61(levels: int, params: FlowParams | None = None, bases: list | None = None,
                max_level: int = DEFAULT_MAX_LEVEL) -> Thm61State:
    """Castles ``phi_n, psi_n`` for ``n <= levels`` and the finite-stage element ``S``."""
    if levels < 1 or levels > max_level:
        raise ValueError(f"levels must lie in [1, {max_level}]")
    p = params or FlowParams(roof=THM61_ROOF)
    if p.roof != THM61_ROOF:
        raise ValueError("the construction is laid out for roof 5/2")
    lengths = [Q(x) for x in (bases or default_bases(levels))]
    if len(lengths) < levels + 1:
        raise ValueError("need l_1, ..., l_{levels+1}")
    if lengths[0] != 1 or any(not (lengths[i + 1] < lengths[i]) or lengths[i + 1] <= 0 for i in range(levels)):
        raise ValueError("section lengths must start at 1 and strictly decrease")
    b = [IntervalSet.span(0, x) for x in lengths]
    half = Q(1) / 2

    full = IntervalSet.span(0, 1)
    phi = PartialMap({ONE: _seg(full, 0, half, p)}, p)
    psi = PartialMap({-ONE: _seg(full, Q(3) / 2, 2, p)}, p)
    out = []
    for n in range(1, levels + 1):
        base, nxt = b[n - 1], b[n]
        sets = _level_sets(base, n, p)
        lv = Thm61Level(n, base, phi, psi, sets)
        out.append(lv)
        if n == levels:
            break
        w2 = Q(1) / 2 ** (n + 1)
        E = saturation(psi, sets["C0"])
        sets["E"] = E
        xi = PartialMap({3 * w2: sets["B0"], -half: sets["D0"]}, p)
        psi_E = psi.restrict(E)
        phi_t = phi.union(xi).union(psi_E)
        psi_t = psi.restrict(psi.domain() - E)
        gone = base - nxt
        dgone = circle_translate(gone, -p.alpha)
        xi1 = PartialMap({1 + w2: _seg(dgone, Q(3) / 2 - w2, Q(3) / 2, p)}, p)
        xi2 = PartialMap({-Q(3) / 2: _seg(gone, half, half + w2, p)}, p)
        lv.maps.update(xi=xi, xi_prime=xi1, xi_second=xi2, phi_tilde=phi_t, psi_tilde=psi_t)
        phi = phi_t.union(xi1)
        psi = psi_t.union(xi2)

    top = out[-1]
    N = top.n
    w = Q(1) / 2 ** N
    dtop = circle_translate(top.base, -p.alpha)
    glue_phi = PartialMap({1 + w: _seg(dtop, Q(3) / 2 - w, Q(3) / 2, p)}, p)
    glue_psi = PartialMap({-Q(3) / 2: _seg(top.base, half, half + w, p)}, p)
    closed = top.phi.union(glue_phi).union(top.psi).union(glue_psi)

    Y = _seg(full, 0, 2, p)
    Z = _seg(full, 2, Q(5) / 2, p)
    Zp = _seg(full, Q(3) / 2, 2, p)
    eta = PartialMap({half: Zp}, p)
    rules = defaultdict(list)
    for t, A in closed.rules.items():
        keep = A - Zp
        if keep:
            rules[t].append(keep)
        moved = A & Zp
        if moved:
            rules[t - half].append(flow_set(moved, half, p))  # phi(eta^-1(z)) on Z
    rules[half].append(Zp)
    S = StepElement(rules, p)
    return Thm61State(p, out, closed, S, Y, Z, Zp, eta, mu(castle_support(top.psi), p))


# --------------------------------------------------------------------------- audits


def translation_conditions(state: Thm61State, n: int) -> list[str]:
    """Check both displayed translation conditions at level ``n`` exactly."""
    lv = state.level(n)
    p = state.params
    w = Q(1) / 2 ** n
    half = Q(1) / 2
    problems = []
    C = build_cross_section(lv.base, p)
    expect_phi = defaultdict(list)
    expect_psi = defaultdict(list)
    for iv, k in C.returns:
        piece = IntervalSet._trusted((iv,))
        g = p.roof * k
        # iota_n(c) = sigma_{C_n}(c) - 1/2
        expect_phi[g - half - half - w].append(_seg(piece, 0, w, p))
    dback = []
    for iv, k in C.returns:
        g = p.roof * k
        # d = iota_n(c) = c + g - 1/2, iota^{-1}(d) + t + 1 - (d + t) = 3/2 - g
        cols = circle_translate(IntervalSet._trusted((iv,)), p.alpha * (k - 1))
        expect_psi[Q(3) / 2 - g].append(_seg(cols, 2 - half, 2 - half + w, p))
    tess = Tessellation(C)
    if vec_phi_cells(lv.phi, tess) != PartialMap(expect_phi, p):
        problems.append(f"phi translation condition fails at level {n}")
    if vec_phi_cells(lv.psi, tess) != PartialMap(expect_psi, p):
        problems.append(f"psi translation condition fails at level {n}")
    return problems


def displayed_sets_match(state: Thm61State, n: int) -> list[str]:
    lv = state.level(n)
    problems = []
    for name, phi, basis, ceiling in (("phi", lv.phi, "A", "B"), ("psi", lv.psi, "C", "D")):
        dom, rng = phi.domain(), phi.range()
        if dom - rng != lv.sets[basis]:
            problems.append(f"basis of {name}_{n} differs from the displayed set")
        if rng - dom != lv.sets[ceiling]:
            problems.append(f"ceiling of {name}_{n} differs from the displayed set")
    return problems


def max_abs_shift(m) -> QuadScalar:
    return max_scalar((abs(t) for t in m.rules), default=ZERO)


@dataclass
class CoverageReport:
    n: int
    pieces: list  # (base sub-interval, covered length, Y length, proportion)

    @property
    def proportions(self) -> set:
        return {r for *_, r in self.pieces}


def rank_one_diagnostic(state: Thm61State, n: int) -> CoverageReport:
    """Proportion of ``Y ∩ [c, iota_n(c))`` covered by the phi_n tower over ``c``."""
    lv = state.level(n)
    p = state.params
    C = build_cross_section(lv.base, p)
    tess = Tessellation(C)
    half = Q(1) / 2
    windows = [(iv, ZERO, p.roof * k - half) for iv, k in C.returns]
    covered = fiber_profile(castle_support(lv.phi), tess, windows)
    ylen = fiber_profile(state.Y, tess, windows)
    rows = []
    for iv, (cov, yy) in refine_profiles(covered, ylen):
        rows.append((iv, cov.measure(), yy.measure(), cov.measure() / yy.measure()))
    return CoverageReport(n, rows)


@dataclass
class AlternationStats:
    samples: int
    horizon: int
    alternating: int
    counts: list

    @property
    def fraction(self) -> QuadScalar:
        return Q(self.alternating) / self.samples


def sign_alternations(S: StepElement, x: FlowPoint, horizon: int) -> int:
    """Sign changes of ``rho(x, S^k x)`` for ``k <= horizon``, ignoring zeros."""
    total = ZERO
    last = 0
    changes = 0
    for _ in range(horizon):
        t = S.cocycle(x)
        x = flow_by(x, t, S.params)
        total = total + t
        s = total.sign()
        if s and last and s != last:
            changes += 1
        if s:
            last = s
    return changes


def random_points(rng: random.Random, count: int, params: FlowParams, denom: int = 10 ** 6) -> list[FlowPoint]:
    pts = []
    for _ in range(count):
        th = Q(rng.randrange(denom)) / denom
        s = params.roof * rng.randrange(denom) / denom
        pts.append(FlowPoint(th, s))
    return pts


def sign_alternation_stats(S: StepElement, samples: int = 1000, horizon: int = 64, seed: int = 0) -> AlternationStats:
    rng = random.Random(seed)
    counts = [sign_alternations(S, x, horizon) for x in random_points(rng, samples, S.params)]
    return AlternationStats(samples, horizon, sum(1 for c in counts if c >= 1), counts)


# --------------------------------------------------------------------------- per-cell audits


@dataclass
class CellMap:
    """A partial map restricted to the cells over one base piece, in offset coordinates."""

    piece: Interval
    gap: QuadScalar
    rules: list  # (offset Interval, shift), sorted by offset

    def _locate(self, lo: QuadScalar, hi: QuadScalar):
        i = bisect_right(self._los, lo) - 1
        if i < 0:
            i = 0
        while i < len(self.rules) and self.rules[i][0].lo < hi:
            iv, t = self.rules[i]
            a = lo if lo > iv.lo else iv.lo
            b = hi if hi < iv.hi else iv.hi
            if a < b:
                yield Interval(a, b), t
            i += 1

    def __post_init__(self):
        self._los = [iv.lo for iv, _ in self.rules]

    def domain(self) -> IntervalSet:
        return IntervalSet(iv for iv, _ in self.rules)

    def range(self) -> IntervalSet:
        return IntervalSet(iv.shift(t) for iv, t in self.rules)

    def columns(self, cap: int = 2 ** 20):
        """Walk every column from the basis; returns (tops, visited intervals, height)."""
        dom = self.domain()
        basis = dom - self.range()
        tops = []  # (origin interval, total shift)
        visited = []
        height = 0
        for start in basis:
            stack = [(start, ZERO, 1)]
            while stack:
                orig, sigma, depth = stack.pop()
                if depth > cap:
                    raise RuntimeError("castle column exceeds cap")
                height = max(height, depth)
                pos = orig.shift(sigma)
                visited.append(pos)
                rest = IntervalSet._trusted((pos,))
                for part, t in self._locate(pos.lo, pos.hi):
                    rest = rest - IntervalSet._trusted((part,))
                    stack.append((part.shift(-sigma), sigma + t, depth + 1))
                for part in rest:
                    tops.append((part.shift(-sigma), sigma))
        return tops, visited, height


def cell_maps(phi: PartialMap, tess: Tessellation) -> tuple[list[CellMap], list[str]]:
    """Offset form of ``phi`` over each base piece; problems list pieces leaving their cell."""
    profiles = [fiber_profile(A, tess) for A in phi.rules.values()]
    shifts = list(phi.rules)
    windows = {iv.lo: (lo, hi) for iv, lo, hi in tess.window_partition()}
    wkeys = sorted(windows)
    out, problems = [], []
    for iv, offs in refine_profiles(*profiles):
        lo, hi = windows[wkeys[bisect_right(wkeys, iv.lo) - 1]]
        rules = []
        for t, O in zip(shifts, offs):
            for part in O:
                if part.lo + t < lo or part.hi + t > hi:
                    problems.append(f"piece with shift {t.exact_str()} leaves its cell over [{iv.lo.display()}, {iv.hi.display()})")
                rules.append((part, t))
        rules.sort(key=lambda r: r[0].lo)
        out.append(CellMap(iv, hi - lo, rules))
    return out, problems


def castle_validate_cells(phi: PartialMap, tess: Tessellation, cap: int = 2 ** 20) -> CastleReport:
    """Castle audit for maps that keep every point in its cell, done per base piece in 1-D."""
    maps, problems = cell_maps(phi, tess)
    if problems:
        return CastleReport(EMPTY_RECTS, EMPTY_RECTS, 0, [], problems)
    p = phi.params
    height = 0
    for cm in maps:
        dom, rng = cm.domain(), cm.range()
        if sum_len(iv for iv, _ in cm.rules) != dom.measure():
            problems.append(f"overlapping domain pieces over [{cm.piece.lo.display()}, {cm.piece.hi.display()})")
            continue
        tops, visited, h = cm.columns(cap)
        height = max(height, h)
        support = dom | rng
        if sum_len(visited) != support.measure() or IntervalSet(visited) != support:
            problems.append(f"columns over [{cm.piece.lo.display()}, {cm.piece.hi.display()}) overlap or miss the support")
    dom, rng = phi.domain(), phi.range()
    return CastleReport(dom - rng, rng - dom, height, [], problems)


def vec_phi_cells(phi: PartialMap, tess: Tessellation) -> PartialMap:
    maps, problems = cell_maps(phi, tess)
    if problems:
        raise ValueError(problems[0])
    rules = defaultdict(list)
    for cm in maps:
        base = IntervalSet._trusted((cm.piece,))
        for orig, sigma in cm.columns()[0]:
            rules[sigma].append(segment_set(base, orig.lo, orig.hi, phi.params))
    return PartialMap(rules, phi.params)


def sum_len(intervals) -> QuadScalar:
    total = ZERO
    for iv in intervals:
        total = total + iv.length
    return total


def level_tessellation(state: Thm61State, n: int) -> Tessellation:
    return Tessellation(build_cross_section(state.level(n).base, state.params))
