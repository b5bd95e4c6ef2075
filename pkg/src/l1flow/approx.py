"""Approximation pipelines: grid-valued, periodic and monotone approximations of step elements.

All quantities are exact.  Maps that only need to respect cells of a tessellation are
realized as order-preserving fiber transports.
"""
from __future__ import annotations

import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .exactnum import (
    ONE,
    ZERO,
    Interval,
    IntervalSet,
    Number,
    Q,
    QuadScalar,
    UNIT,
    sorted_unique,
    sum_scalars,
)
from .flow import (
    CANONICAL,
    EMPTY_RECTS,
    FlowParams,
    RectSet,
    StepFunction,
    Tessellation,
    build_cross_section,
    fiber_measure_batch,
    fiber_profile,
    gap_atlas,
    mu,
    phase_space,
    profile_set,
    refine_profiles,
    segment_set,
)
from .fullgroup import (
    DEFAULT_RETURN_CAP,
    PartialMap,
    StepElement,
    arrival_departure,
    arrival_set,
    cell_rotation,
    cocycle_distance,
    cycle_element,
    departure_set,
    first_hits,
    hopf,
    induced,
    intermitted,
    lane_element,
    monotone_certificate,
    periodic_part,
    restrict_to_invariant,
    return_lane,
    segment_rotation,
    swap_element,
    transport_element,
    fiber_transport,
    union_all,
)


def _quiet(fn, *args, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fn(*args, **kwargs)


def _disjoint_union(*maps) -> StepElement:
    rules = defaultdict(list)
    params = maps[0].params
    for m in maps:
        for t, A in m.rules.items():
            rules[t].append(A)
    return StepElement(rules, params)


def _cut_offsets(offs: IntervalSet, amount: QuadScalar) -> IntervalSet:
    """Leftmost part of ``offs`` with measure ``amount``."""
    out = []
    left = amount
    for iv in offs:
        if left <= 0:
            break
        if iv.length <= left:
            out.append(iv)
            left = left - iv.length
        else:
            out.append(Interval(iv.lo, iv.lo + left))
            left = ZERO
    return IntervalSet(out)


def sparse_section(min_gap: Number, params: FlowParams, lo: Number = 0):
    """Cross section over ``[lo, lo+w)`` with ``w`` halved until every gap exceeds ``min_gap``."""
    min_gap = Q(min_gap)
    w = Q(1) / 2
    lo = Q(lo)
    while True:
        C = build_cross_section(IntervalSet.span(lo, lo + w), params)
        if C.min_gap() > min_gap:
            return C
        w = w / 2


def sup_deviation(T: StepElement, S: StepElement) -> QuadScalar:
    """``esssup |ρ_T - ρ_S|`` by exact intersection of the rule sets."""
    X = phase_space(T.params)

    def parts(m):
        out = list(m.rules.items())
        rest = X - m.support
        if rest:
            out.append((ZERO, rest))
        return out

    best = ZERO
    for t, A in parts(T):
        for s, B in parts(S):
            if abs(t - s) > best and not A.isdisjoint(B):
                best = abs(t - s)
    return best


# --------------------------------------------------------------------------- grid-valued approximation


class GridTooCoarse(ValueError):
    pass


@dataclass
class GridReport:
    grid: QuadScalar
    epsilon: QuadScalar
    deviation: QuadScalar
    phase_pieces: int

    def to_json(self) -> dict:
        return {k: _scalar_json(getattr(self, k)) for k in ("grid", "epsilon", "deviation")} | {
            "phase_pieces": self.phase_pieces}


def _lattice_range(a: QuadScalar, b: QuadScalar, q: QuadScalar, step: QuadScalar) -> range:
    """Integers ``m`` with ``q + m*step`` in ``[a, b)``."""
    return range(((a - q) / step).ceil(), ((b - q) / step).ceil())


def h_decompose(T: StepElement, epsilon: Number, grid: Number, report: bool = False):
    """Element with all shifts in ``grid * Z`` and ``esssup D(Tx, Sx) < epsilon``.

    Heights are read modulo the grid step, which is a phase preserved by every
    grid-valued element.  For each phase the T-images of the phase lattice are matched in
    order with the lattice itself, anchored at the section points of the unit-column
    tessellation; the anchor offset is the net lattice flux across the anchor, which makes
    the matching consistent along whole orbits.  The remaining free integer per phase is
    chosen to minimize the deviation.
    """
    eps, step = Q(epsilon), Q(grid)
    p = T.params
    if not step < eps:
        raise ValueError("grid step must be smaller than epsilon")
    if not (p.roof / step).is_rational() or (p.roof / step).frac():
        raise ValueError("grid step must divide the roof")
    if all((t / step).frac() == 0 for t in T.rules):
        return (T, GridReport(step, eps, ZERO, 1)) if report else T
    h = p.roof
    tess = Tessellation(build_cross_section(UNIT, p))
    full = Interval(ZERO, ONE)
    rules = list(T.rules.items())
    rest = phase_space(p) - T.support
    if rest:
        rules.append((ZERO, rest))
    profiles = []
    for t, A in rules:
        profiles.append(fiber_profile(A, tess, pieces=[(full, -t, h - t)]))
    flux_sign = []
    for t, A in rules:
        if t > 0:
            profiles.append(fiber_profile(A, tess, pieces=[(full, -t, ZERO)]))
            flux_sign.append(1)
        elif t < 0:
            profiles.append(fiber_profile(A, tess, pieces=[(full, ZERO, -t)]))
            flux_sign.append(-1)
    refined = refine_profiles(*profiles)
    nr = len(rules)
    # phase breakpoints shared by every cell
    cuts = {ZERO, step}
    for _, offs in refined:
        for o in offs:
            for iv in o:
                for e in (iv.lo, iv.hi):
                    cuts.add(e - step * (e / step).floor())
    cuts = sorted_unique(cuts)
    phases = [Interval(a, b) for a, b in zip(cuts, cuts[1:])]
    configs = []  # (theta piece, phase index, [(rule shift, m, j)])
    for th, offs in refined:
        for pi, ph in enumerate(phases):
            q = (ph.lo + ph.hi) / 2
            images = []
            for (t, _), U in zip(rules, offs[:nr]):
                for iv in U:
                    for m in _lattice_range(iv.lo, iv.hi, q, step):
                        images.append((q + step * m + t, m, t))
            images.sort(key=lambda w: w[0])
            flux = 0
            for sgn, W in zip(flux_sign, offs[nr:]):
                flux += sgn * sum(len(_lattice_range(iv.lo, iv.hi, q, step)) for iv in W)
            configs.append((th, pi, [(t, m, k - flux - m) for k, (_, m, t) in enumerate(images)]))
    # choose the free integer per phase
    kappa = {}
    worst = ZERO
    for pi in range(len(phases)):
        devs = [t - step * j for _, qi, items in configs if qi == pi for t, _, j in items]
        if not devs:
            kappa[pi] = 0
            continue
        lo_d, hi_d = min(devs), max(devs)
        mid = (lo_d + hi_d) / (2 * step)
        best = None
        for cand in (mid.floor(), mid.ceil()):
            err = max(abs(step * cand - lo_d), abs(step * cand - hi_d))
            if best is None or err < best[1]:
                best = (cand, err)
        kappa[pi] = best[0]
        if best[1] > worst:
            worst = best[1]
        if not best[1] < eps:
            bad = next(th for th, qi, _ in configs if qi == pi)
            raise GridTooCoarse(f"quantized targets collide within epsilon near cells "
                                f"[{bad.lo.display()}, {bad.hi.display()}) at phase "
                                f"[{phases[pi].lo.display()}, {phases[pi].hi.display()})")
    out = defaultdict(list)
    for th, pi, items in configs:
        ph = phases[pi]
        base = IntervalSet._trusted((th,))
        for t, m, j in items:
            out[step * (j + kappa[pi])].append(segment_set(base, ph.lo + step * m, ph.hi + step * m, p))
    S = StepElement(out, p)
    return (S, GridReport(step, eps, worst, len(phases))) if report else S


# --------------------------------------------------------------------------- monotone decomposition


@dataclass
class MonotoneSplit:
    section: RectSet  # A: points whose forward orbit stays on one side
    induced: StepElement  # T_A
    periodic: StepElement  # P = T ∘ T_A^{-1}
    covered: RectSet  # orbit segments through A with resolved returns
    residual: RectSet
    index_T: QuadScalar
    index_induced: QuadScalar
    params: FlowParams

    @property
    def residual_measure(self) -> QuadScalar:
        return mu(self.residual, self.params)

    def to_json(self) -> dict:
        return {"index_T": _scalar_json(self.index_T), "index_induced": _scalar_json(self.index_induced),
                "section_measure": _scalar_json(mu(self.section, self.params)),
                "residual_measure": _scalar_json(self.residual_measure),
                "periodic": self.periodic.to_json(), "induced": self.induced.to_json()}


def one_sided_points(T: StepElement, sign: int, cap: int = 64) -> RectSet:
    """Points of supp T whose displacement ``ρ(x, T^n x)`` has the given sign for ``1 <= n <= cap``."""
    def accept(n, sigma, O):
        bad = sigma <= 0 if sign > 0 else sigma >= 0
        return O if bad else EMPTY_RECTS

    return _quiet(first_hits, T, T.support, accept, cap).residual


def _tower_floors(T: StepElement, hits) -> tuple[RectSet, dict]:
    """Union of the floors ``T^k O``, ``0 <= k < n``, over resolved return hits ``(n, σ, O)``."""
    floors = []
    tops = {}
    by_n = defaultdict(list)
    for n, _, O in hits:
        by_n[n].append(O)
    for n, group in by_n.items():
        cur = PartialMap({ZERO: union_all(group)}, T.params)
        floors.append(cur.domain())
        for _ in range(1, n):
            cur = cur.then(T.restrict(cur.range()))
            floors.append(cur.range())
        tops[n] = cur
    return union_all(floors), tops


def monotone_decompose(T: StepElement, cap: int = 64) -> MonotoneSplit:
    """``T = P ∘ T_A`` with ``T_A`` monotone and ``P`` periodic, for dissipative ``T``.

    A candidate section is the set of points whose next ``cap`` displacements are all
    positive (or all negative).  A point of it is certified when its returns to the
    candidate under T stay on the same side and arrive within ``cap`` steps; between
    returns the displacement then stays of one sign, so the whole future does.
    """
    p = T.params
    fwd = one_sided_points(T, +1, cap)
    bwd = one_sided_points(T, -1, cap)
    cand = fwd | bwd
    ret = _quiet(induced, T, cand, cap)
    TA0 = ret.partial()
    resolved = ret.resolved()

    def stable(side: RectSet) -> RectSet:
        S = side & resolved
        while True:
            keep = S & TA0.inverse().image(S) & TA0.image(S)
            if keep == S:
                return S
            S = keep

    A = stable(fwd) | stable(bwd)
    res = _quiet(induced, T, A, cap)
    TA = res.partial().as_element()
    P = T.compose(TA.inverse())
    covered, _ = _tower_floors(T, res.hits)
    return MonotoneSplit(A, TA, P, covered, T.support - covered, T.index(), TA.index(), p)


# --------------------------------------------------------------------------- copious sets


@dataclass
class CopiousSelection:
    xi: StepFunction
    nu_forward: StepFunction
    r_forward: StepFunction
    nu_backward: StepFunction
    r_backward: StepFunction
    arrival_forward: RectSet
    arrival_backward: RectSet
    departure_forward: RectSet
    departure_backward: RectSet
    delta: dict  # side -> smallest δ with ξ >= (1-δ) λ_c(A), or None
    saturation_defect: dict  # side -> (μ([A∖A•]), δ/(1-δ) μ(X side)) when δ < 1/2
    params: FlowParams

    @property
    def arrival(self) -> RectSet:
        return self.arrival_forward | self.arrival_backward

    @property
    def departure(self) -> RectSet:
        return self.departure_forward | self.departure_backward

    def saturation_ok(self) -> bool:
        return all(a <= b for a, b in self.saturation_defect.values())

    def to_json(self) -> dict:
        return {"xi": self.xi.to_json(), "nu_forward": self.nu_forward.to_json(),
                "r_forward": self.r_forward.to_json(), "nu_backward": self.nu_backward.to_json(),
                "r_backward": self.r_backward.to_json(),
                "arrival_forward_measure": _scalar_json(mu(self.arrival_forward, self.params)),
                "arrival_backward_measure": _scalar_json(mu(self.arrival_backward, self.params)),
                "delta": {k: None if v is None else _scalar_json(v) for k, v in self.delta.items()},
                "saturation_defect": {k: [_scalar_json(a), _scalar_json(b)]
                                      for k, (a, b) in self.saturation_defect.items()}}


class InfeasibleTarget(ValueError):
    pass


def _as_step(xi, base: IntervalSet) -> StepFunction:
    if isinstance(xi, StepFunction):
        return xi
    v = Q(xi)
    return StepFunction([(iv, v) for iv in base])


def _split_by_step(refined, f: StepFunction):
    """Refine profile pieces at the breakpoints of a step function, attaching its value."""
    out = []
    for iv, offs in refined:
        for piece, v in f.pieces:
            lo = iv.lo if iv.lo > piece.lo else piece.lo
            hi = iv.hi if iv.hi < piece.hi else piece.hi
            if lo < hi:
                out.append((Interval(lo, hi), offs, v))
    return out


def copious_choice(levels: list[IntervalSet], target: QuadScalar):
    """``(ν, r, selected offsets)`` for one cell; ``levels[n]`` are the offsets of ``A_n``."""
    if target <= 0:
        return 0, ZERO, IntervalSet()
    tail = [ZERO] * (len(levels) + 1)  # tail[n] = measure of levels k >= n
    for n in range(len(levels) - 1, -1, -1):
        tail[n] = tail[n + 1] + levels[n].measure()
    nu = next(n for n in range(len(levels)) if tail[n + 1] < target)
    need = target - tail[nu + 1]
    part = _cut_offsets(levels[nu], need)
    r = part.upper() if part else ZERO
    chosen = IntervalSet([iv for L in levels[nu + 1:] for iv in L] + list(part))
    return nu, r, chosen


def transfer_saturation(T: StepElement, ad, E: RectSet) -> RectSet:
    """``⋃ T^k(E ∩ A^n)``, ``0 <= k <= n``: the cell-wise T-saturation of ``E ⊆ A_C``."""
    parts = []
    for O, n, _ in ad.transfer_levels:
        S = O & E
        for _ in range(n + 1):
            if not S:
                break
            parts.append(S)
            S = T.image(S)
    return union_all(parts)


def copious_sets(T: StepElement, tess: Tessellation, xi, ad=None, cap: int = DEFAULT_RETURN_CAP) -> CopiousSelection:
    """Positive and negative ξ-copious arrival and departure sets."""
    if tess.kind != CANONICAL:
        raise ValueError("copious sets use the canonical tessellation")
    p = T.params
    if ad is None:
        ad = _quiet(arrival_departure, T, tess, cap)
    if ad.residual:
        raise InfeasibleTarget(f"transfer levels unresolved on measure {mu(ad.residual, p).display()}")
    base = tess.section.base
    xi_f = _as_step(xi, base)
    n_max = ad.max_level()
    out = {}
    for side, X in (("forward", ad.monotone.forward), ("backward", ad.monotone.backward)):
        level_sets = [ad.level(n) & X for n in range(n_max + 1)]
        refined = refine_profiles(*[fiber_profile(L, tess) for L in level_sets])
        nu_p, r_p, chosen, delta = [], [], [], None
        for iv, offs, v in _split_by_step(refined, xi_f):
            total = sum_scalars(o.measure() for o in offs)
            if v > total:
                raise InfeasibleTarget(f"ξ = {v.display()} exceeds λ_c = {total.display()} on "
                                       f"[{iv.lo.display()}, {iv.hi.display()}) ({side})")
            if total > 0:
                d = ONE - v / total
                delta = d if delta is None or d > delta else delta
            nu, r, sel = copious_choice(offs, v)
            nu_p.append((iv, Q(nu)))
            r_p.append((iv, r))
            chosen.append((iv, sel))
        A_sel = profile_set(chosen, p)
        out[side] = (StepFunction(nu_p), StepFunction(r_p), A_sel, ad.transfer().image(A_sel), delta, X)
    defects = {}
    for side, (_, _, A_sel, _, delta, X) in out.items():
        if delta is not None and delta < Q(1) / 2:
            full = ad.arrival & X
            sat = transfer_saturation(T, ad, full - A_sel)
            defects[side] = (mu(sat, p), delta / (ONE - delta) * mu(X, p))
    f, b = out["forward"], out["backward"]
    return CopiousSelection(xi_f, f[0], f[1], b[0], b[1], f[2], b[2], f[3], b[3],
                            {"forward": f[4], "backward": b[4]}, defects, p)


# --------------------------------------------------------------------------- single-section periodic construction


@dataclass
class Band:
    """A jump-measure band ``(alpha_n - delta_n, alpha_n + delta_n)`` and the support it covers."""
    alpha: QuadScalar
    delta: QuadScalar
    support_measure: QuadScalar
    handled: bool

    def condition(self, epsilon: QuadScalar, K: QuadScalar) -> bool:
        return 2 * self.delta / (self.alpha - self.delta) < epsilon / (3 * K)

    def to_json(self) -> dict:
        return {"alpha": _scalar_json(self.alpha), "delta": _scalar_json(self.delta),
                "support_measure": _scalar_json(self.support_measure), "handled": self.handled}


@dataclass
class PeriodicApproxParams:
    K: QuadScalar
    beta: QuadScalar
    gamma: QuadScalar
    epsilon: Optional[QuadScalar] = None
    bands: list = field(default_factory=list)

    def __post_init__(self):
        self.K, self.beta, self.gamma = Q(self.K), Q(self.beta), Q(self.gamma)
        if self.epsilon is not None:
            self.epsilon = Q(self.epsilon)
        if not (ZERO < self.gamma < self.beta):
            raise ValueError("need 0 < gamma < beta")
        if not self.K > 0:
            raise ValueError("K must be positive")

    def to_json(self) -> dict:
        out = {"K": _scalar_json(self.K), "beta": _scalar_json(self.beta), "gamma": _scalar_json(self.gamma)}
        if self.epsilon is not None:
            out["epsilon"] = _scalar_json(self.epsilon)
        out["bands"] = [b.to_json() for b in self.bands]
        return out


class PreconditionFailure(ValueError):
    def __init__(self, failures: list[str]):
        super().__init__("; ".join(failures))
        self.failures = failures


@dataclass
class PeriodicApproxReport:
    P: StepElement
    certified_bound: QuadScalar
    measured_error: QuadScalar
    integrals: dict
    checks: dict
    params: Optional[PeriodicApproxParams] = None
    sets: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def to_json(self) -> dict:
        return {"certified_bound": _scalar_json(self.certified_bound),
                "measured_error": _scalar_json(self.measured_error),
                "integrals": {k: _scalar_json(v) for k, v in self.integrals.items()},
                "checks": dict(self.checks),
                "params": self.params.to_json() if self.params else None}


def adjacent_cell_set(tess: Tessellation, sigma: QuadScalar, step: int) -> RectSet:
    """Points ``x`` with ``x + sigma`` in the next (``step=1``) or previous (``-1``) cell."""
    h = tess.params.roof
    parts = []
    for iv, kp, k, kn in gap_atlas(tess):
        g = h * k
        if step > 0:
            lo, hi = g - sigma, g + h * kn - sigma
        else:
            lo, hi = -h * kp - sigma, -sigma
        lo = lo if lo > 0 else ZERO
        hi = hi if hi < g else g
        if lo < hi:
            parts.append(segment_set(IntervalSet._trusted((iv,)), lo, hi, tess.params))
    return union_all(parts)


def jump_measures(T: StepElement, tess: Tessellation, X: RectSet, sign: int) -> StepFunction:
    """``c ↦ λ({x ∈ X : x < c <= Tx})`` (sign +1) or ``λ({x ∈ X : Tx < c <= x})`` (sign -1)."""
    total = StepFunction([(iv, ZERO) for iv in tess.section.base])
    for t, A in T.rules.items():
        if (t > 0) != (sign > 0):
            continue
        window = (-t, ZERO) if t > 0 else (ZERO, -t)
        pieces = [(iv, window[0], window[1]) for iv in tess.section.base]
        prof = fiber_profile(A & X, tess, pieces=pieces)
        total = total + StepFunction([(iv, offs.measure()) for iv, offs in prof])
    return total


def _min_value(f: StepFunction) -> QuadScalar:
    return min(f.values()) if f.pieces else ZERO


def _max_value(f: StepFunction) -> QuadScalar:
    return max(f.values()) if f.pieces else ZERO


@dataclass
class SectionDiagnostics:
    near_forward: StepFunction  # λ_c(D⃗°)
    near_backward: StepFunction
    jump_forward: StepFunction
    jump_backward: StepFunction
    min_gap: QuadScalar

    def to_json(self) -> dict:
        return {k: getattr(self, k).to_json() for k in ("near_forward", "near_backward", "jump_forward", "jump_backward")} | {
            "min_gap": _scalar_json(self.min_gap)}


def _near_departures(T: StepElement, tess: Tessellation, D: RectSet, X: RectSet, step: int) -> RectSet:
    return union_all(A & D & X & adjacent_cell_set(tess, t, step) for t, A in T.rules.items())


def section_diagnostics(T: StepElement, tess: Tessellation, cert=None) -> SectionDiagnostics:
    cert = cert or monotone_certificate(T)
    D = departure_set(T, tess)
    nf = fiber_measure_batch(_near_departures(T, tess, D, cert.forward, +1), tess)
    nb = fiber_measure_batch(_near_departures(T, tess, D, cert.backward, -1), tess)
    return SectionDiagnostics(nf, nb, jump_measures(T, tess, cert.forward, +1),
                              jump_measures(T, tess, cert.backward, -1), tess.section.min_gap())


def _initial_to(E: RectSet, keep: RectSet, amount: QuadScalar, tess: Tessellation) -> RectSet:
    """``keep`` plus the leftmost part of ``E ∖ keep`` so that each cell holds ``amount``."""
    prof = refine_profiles(fiber_profile(keep, tess), fiber_profile(E - keep, tess))
    chosen = [(iv, k | _cut_offsets(rest, amount - k.measure())) for iv, (k, rest) in prof]
    return profile_set(chosen, tess.params)


def periodic_from_monotone(T: StepElement, tess: Tessellation, params: PeriodicApproxParams,
                           cap: int = DEFAULT_RETURN_CAP) -> PeriodicApproxReport:
    """Periodic ``P`` with ``supp P ⊆ supp T`` approximating a monotone ``T``.

    Steps: copious sets with ``ξ = γ``; ``φ`` moves the copious departures onto departures
    that land in the adjacent cell; ``φ'`` moves their images onto the copious arrivals;
    ``U = φ'Tφ``; ``V`` glues forward departures to backward arrivals through ``ψ`` and
    back through ``ψ' = τ⁻¹ψ⁻¹τ⁻¹``; ``P`` is ``V`` on the V-saturation of the copious
    departures.
    """
    p = T.params
    K, beta, gamma = params.K, params.beta, params.gamma
    ident = StepElement.identity(p)
    if not T.rules:
        return PeriodicApproxReport(ident, ZERO, ZERO, {}, {"empty": True}, params)
    if tess.kind != CANONICAL:
        raise ValueError("the construction uses the canonical tessellation")
    cert = monotone_certificate(T)
    failures = []
    if not cert.ok:
        failures.append(f"not certified monotone on measure {mu(cert.uncertified, p).display()}")
    if not tess.section.min_gap() > K:
        failures.append(f"min gap {tess.section.min_gap().display()} is not above K = {K.display()}")
    diag = section_diagnostics(T, tess, cert)
    for name, f, ok in (("near forward jumps", diag.near_forward, lambda v: v > gamma),
                        ("near backward jumps", diag.near_backward, lambda v: v > gamma),
                        ("forward jumps", diag.jump_forward, lambda v: v < beta),
                        ("backward jumps", diag.jump_backward, lambda v: v < beta)):
        for iv, v in f.pieces:
            if not ok(v):
                failures.append(f"{name} = {v.display()} on [{iv.lo.display()}, {iv.hi.display()})")
    if failures:
        raise PreconditionFailure(failures)

    ad = _quiet(arrival_departure, T, tess, cap)
    if ad.residual:
        raise PreconditionFailure([f"transfer unresolved on measure {mu(ad.residual, p).display()}"])
    cop = copious_sets(T, tess, gamma, ad)
    A, D = ad.arrival, ad.departure
    Dn_f = _near_departures(T, tess, D, cert.forward, +1)
    Dn_b = _near_departures(T, tess, D, cert.backward, -1)

    # φ: copious departures onto near departures
    F_f = _initial_to(Dn_f, cop.departure_forward & Dn_f, gamma, tess)
    F_b = _initial_to(Dn_b, cop.departure_backward & Dn_b, gamma, tess)
    phi = _disjoint_union(transport_element(cop.departure_forward, F_f, tess),
                          transport_element(cop.departure_backward, F_b, tess))
    # φ': images of the near departures onto copious arrivals
    phip = _disjoint_union(transport_element(T.image(F_f), cop.arrival_forward, tess),
                           transport_element(T.image(F_b), cop.arrival_backward, tess))
    U = phip.compose(T.compose(phi))

    tau = ad.transfer()
    tau_inv = tau.inverse()
    psi = fiber_transport(cop.departure_forward, cop.arrival_backward, tess)
    psip = tau_inv.restrict(cop.departure_backward).then(psi.inverse()).then(tau_inv)
    Dsel = cop.departure
    V = U.restrict(phase_space(p) - Dsel).union(psi).union(psip).as_element()

    sat = transfer_saturation(T, ad, cop.arrival)
    P = restrict_to_invariant(V, sat)

    intD_T = T.cocycle_integral(D)
    intD_U = U.cocycle_integral(D)
    J = union_all(B for t, B in T.rules.items() if abs(t) >= K)
    intJ_T = T.cocycle_integral(J)
    supp = mu(T.support, p)
    bound = 5 * intD_T + intJ_T + K * (beta - gamma) / gamma * supp
    measured = cocycle_distance(T, P)
    dist_TU = cocycle_distance(T, U)
    dist_UV = cocycle_distance(U, V)
    loop = tau.restrict(cop.arrival_forward).then(psi).then(tau).then(psip)
    per = periodic_part(P, 2 * ad.max_level() + 4)
    checks = {
        "phi_valid": phi.is_valid(),
        "phi_prime_valid": phip.is_valid(),
        "U_valid": U.is_valid(),
        "V_valid": V.is_valid(),
        "P_valid": P.is_valid(),
        "departing_arcs_conserved": intD_U == intD_T,
        "U_agrees_off_departures": cocycle_distance(T, U, phase_space(p) - D) == 0,
        "arrival_departure_preserved": arrival_set(U, tess) == A and departure_set(U, tess) == D,
        "departure_estimate": dist_TU <= 2 * intD_T,
        "gluing_estimate": dist_UV <= 2 * intD_U,
        "loop_identity": list(loop.rules) == [ZERO] and loop.domain() == cop.arrival_forward,
        "periodic": not per.residual,
        "support_contained": P.support.issubset(T.support),
        "index_zero": P.index() == 0,
        "bound_holds": measured <= bound,
    }
    integrals = {"departing_arcs_T": intD_T, "departing_arcs_U": intD_U, "large_jumps": intJ_T,
                 "support_measure": supp, "dist_T_U": dist_TU, "dist_U_V": dist_UV,
                 "dist_V_P": cocycle_distance(V, P), "looped_measure": mu(sat, p)}
    sets = {"copious": cop, "transfer": ad, "phi": phi, "phi_prime": phip, "U": U, "V": V,
            "diagnostics": diag}
    return PeriodicApproxReport(P, bound, measured, integrals, checks, params, sets)


def periodic_from_monotone_auto(T: StepElement, epsilon: Number, widths: int = 6,
                                cap: int = DEFAULT_RETURN_CAP):
    """Drive the single-section construction with automatically chosen section and bands.

    The jump measures of an element of this uniquely ergodic flow do not depend on the
    orbit, so one band covers the whole support whenever the per-cell jump measures fit
    in it; sections are made sparser until the measured error drops below ``epsilon``.
    Returns ``(P, report dict)``; unhandled support is reported as a defect.
    """
    eps = Q(epsilon)
    p = T.params
    ident = StepElement.identity(p)
    supp = mu(T.support, p)
    if not T.rules:
        return ident, {"bands": [], "defect_measure": ZERO, "measured_error": ZERO, "coverage": ONE}
    if T.index() != 0:
        raise ValueError(f"index {T.index().display()} is not zero")
    cert = monotone_certificate(T)
    if not cert.ok:
        raise ValueError("input is not certified monotone")
    K = T.max_shift()
    attempts = []
    min_gap = K
    for _ in range(widths):
        C = sparse_section(min_gap, p)
        tess = Tessellation(C)
        diag = section_diagnostics(T, tess, cert)
        low = min(_min_value(diag.near_forward), _min_value(diag.near_backward))
        high = max(_max_value(diag.jump_forward), _max_value(diag.jump_backward))
        if low <= 0:
            attempts.append({"min_gap": C.min_gap(), "status": "no near jumps"})
            min_gap = 2 * C.min_gap()
            continue
        # band (alpha - delta, alpha + delta) with the ratio condition for epsilon
        delta = low * eps / (16 * K)
        alpha = low
        band = Band(alpha, delta, supp, False)
        gamma, beta = alpha - delta, alpha + delta
        if not high < beta or not band.condition(eps, K):
            attempts.append({"min_gap": C.min_gap(), "status": "jump measures spread beyond one band"})
            min_gap = 2 * C.min_gap()
            continue
        params = PeriodicApproxParams(K, beta, gamma, eps, [band])
        try:
            rep = periodic_from_monotone(T, tess, params, cap)
        except PreconditionFailure as exc:
            attempts.append({"min_gap": C.min_gap(), "status": "precondition", "failures": exc.failures})
            min_gap = 2 * C.min_gap()
            continue
        attempts.append({"min_gap": C.min_gap(), "status": "built", "measured": rep.measured_error,
                         "bound": rep.certified_bound})
        if rep.measured_error < eps:
            band.handled = True
            return rep.P, {"bands": [band], "defect_measure": ZERO, "measured_error": rep.measured_error,
                           "certified_bound": rep.certified_bound, "coverage": ONE, "attempts": attempts,
                           "params": params, "checks": rep.checks}
        # the error scales like the reciprocal gap
        min_gap = C.min_gap() * max(2, (rep.measured_error / eps).ceil())
    return ident, {"bands": [Band(ZERO, ZERO, supp, False)], "defect_measure": supp,
                   "measured_error": cocycle_distance(T, ident), "coverage": ZERO, "attempts": attempts}


# --------------------------------------------------------------------------- conservative branch


@dataclass
class ConservativeReport:
    K: QuadScalar
    M: QuadScalar
    min_gap: QuadScalar
    intermitted_error: QuadScalar  # ‖T T_RC⁻¹‖₁
    tower_error: QuadScalar  # ‖T_RC P⁻¹‖₁
    error: QuadScalar  # ‖T P⁻¹‖₁
    residual: QuadScalar
    uncovered: QuadScalar
    base_fraction: Optional[QuadScalar]

    def to_json(self) -> dict:
        return {k: (None if getattr(self, k) is None else _scalar_json(getattr(self, k)))
                for k in ("K", "M", "min_gap", "intermitted_error", "tower_error", "error", "residual",
                          "uncovered", "base_fraction")}


def _towers(R: StepElement, Q_set: RectSet, fraction: QuadScalar, tess: Tessellation, cap: int):
    """Kakutani towers of ``R`` over a thin base inside ``Q_set``; tops return to their base."""
    p = R.params
    w = p.roof / 4
    base = Q_set & union_all(segment_set(UNIT, w * k, w * k + w * fraction, p) for k in range(4))
    ret = _quiet(induced, R, base, cap)
    floors, tops = _tower_floors(R, ret.hits)
    rules = defaultdict(list)
    top_sets = []
    for n, cur in tops.items():
        top = cur.range()
        top_sets.append(top)
        for t, A in cur.inverse().rules.items():
            rules[t].append(A)
    top_all = union_all(top_sets)
    for t, A in R.rules.items():
        rules[t].append(A & (floors - top_all))
    return StepElement(rules, p), floors


def approx_conservative_by_periodic(T: StepElement, epsilon: Number, cap: int = DEFAULT_RETURN_CAP,
                                    min_fraction: Number = Q(1) / 256):
    """Periodic ``P`` with ``‖T P⁻¹‖₁`` small, for conservative ``T``.

    The section gaps exceed ``M = 8K²/ε`` with ``K`` the largest displacement, so the
    large-jump set is empty and the crude count bounds ``‖T T_RC⁻¹‖₁`` by ``ε/2``.  The
    intermitted map is then replaced by a tower map: periodic orbits are kept and the
    rest is cut into towers over a thin base whose tops return to the base.
    """
    eps = Q(epsilon)
    p = T.params
    ident = StepElement.identity(p)
    if not T.rules:
        return ident, ConservativeReport(ZERO, ZERO, ZERO, ZERO, ZERO, ZERO, ZERO, ZERO, None)
    if not _quiet(periodic_part, T, cap).residual:
        return T, ConservativeReport(T.max_shift(), ZERO, ZERO, ZERO, ZERO, ZERO, ZERO, ZERO, None)
    K = T.max_shift()
    M = 8 * K * K / eps
    C = sparse_section(M, p)
    tess = Tessellation(C)
    TR = _quiet(intermitted, T, tess, cap)
    R = TR.partial().as_element()
    err1 = cocycle_distance(T, R)
    per = _quiet(periodic_part, R, cap)
    Pset = per.resolved()
    rest = R.support - Pset
    if not rest:
        return R, ConservativeReport(K, M, C.min_gap(), err1, ZERO, err1, TR.residual_measure, ZERO, None)
    f = Q(1) / 2
    best = None
    while True:
        towers, floors = _towers(R, rest, f, tess, cap)
        P = _disjoint_union(restrict_to_invariant(R, Pset), towers)
        err = cocycle_distance(T, P)
        rep = ConservativeReport(K, M, C.min_gap(), err1, cocycle_distance(R, P), err, TR.residual_measure,
                                 mu(rest - floors, p), f)
        if best is None or err < best[1].error:
            best = (P, rep)
        if err < eps or f <= min_fraction:
            return best
        f = f / 2


# --------------------------------------------------------------------------- templates and the kernel pipeline


def _hs(*bounds) -> IntervalSet:
    return IntervalSet([Interval(Q(a), Q(b)) for a, b in zip(bounds[::2], bounds[1::2])])


def monotone_templates() -> list[tuple[str, StepElement]]:
    """Monotone elements of index zero built from full-width lanes and return lanes."""
    from .exactnum import ALPHA
    roof2 = FlowParams(roof=Q(2))
    half = IntervalSet.span(0, Q(1) / 2)
    out = [
        ("halves", lane_element([(_hs(0, "1/2"), 1), (_hs("1/2", 1), -1)])),
        ("quarter-double", lane_element([(_hs(0, "1/4"), 2), (_hs("1/4", "3/4"), -1)])),
        ("return-lane", _disjoint_union(return_lane(half, _hs(0, "1/3")),
                                        lane_element([(_hs("1/3", "2/3"), -1)]))),
        ("half-time", lane_element([(_hs(0, "1/4", "1/2", "3/4"), Q(1) / 2), (_hs("1/4", "1/2"), -1)])),
        ("irrational-band", lane_element([(IntervalSet.span(0, ALPHA), 1), (IntervalSet.span(ALPHA, 2 * ALPHA), -1)])),
        ("two-forward", lane_element([(_hs(0, "1/3"), 1), (_hs("1/3", "1/2"), 2), (_hs("1/2", "5/6"), -2)])),
        ("one-two-three", lane_element([(_hs(0, "1/4"), 1), (_hs("1/4", "1/2"), 2), (_hs("1/2", "3/4"), -3)])),
        ("tall-roof", lane_element([(_hs(0, 1), 2), (_hs(1, 2), -2)], roof2)),
        ("return-pair", _disjoint_union(return_lane(half, _hs(0, "1/2"), 1), return_lane(half, _hs("1/2", 1), -1))),
        ("long-jump", lane_element([(_hs(0, "1/8"), 4), (_hs("1/8", "5/8"), -1)])),
        ("half-time-pair", lane_element([(_hs(0, "1/4", "1/2", "3/4"), Q(1) / 2),
                                         (_hs("1/4", "1/2", "3/4", 1), -Q(1) / 2)])),
    ]
    return out


def conservative_templates() -> list[tuple[str, StepElement]]:
    from .exactnum import ALPHA
    p = FlowParams()
    tess = Tessellation(build_cross_section(IntervalSet.span(0, Q(1) / 2), p))
    th = IntervalSet.span(0, Q(1) / 4)
    return [
        ("cell-rotation", cell_rotation(tess, Q(1) / 3)),
        ("rational-rotation", segment_rotation(UNIT, 0, Q(1) / 2, Q(1) / 8)),
        ("irrational-rotation", segment_rotation(UNIT, 0, Q(1) / 2, ALPHA / 2)),
        ("long-rotation", segment_rotation(th, 0, 2, ALPHA)),
        ("swap", swap_element(RectSet.rect(0, Q(1) / 4, 0, Q(1) / 4), Q(1) / 2)),
        ("three-cycle", cycle_element(RectSet.rect(Q(1) / 2, Q(3) / 4, 0, Q(1) / 4), [Q(1) / 4, Q(1) / 4])),
    ]


@dataclass
class KernelResult:
    P: StepElement
    error: QuadScalar
    covered: QuadScalar  # measure of supp T handled by a branch
    support: QuadScalar
    branches: dict

    @property
    def coverage(self) -> QuadScalar:
        return self.covered / self.support if self.support else ONE

    def to_json(self) -> dict:
        return {"error": _scalar_json(self.error), "covered": _scalar_json(self.covered),
                "support": _scalar_json(self.support), "coverage": _scalar_json(self.coverage),
                "branches": self.branches}


def kernel_approximation(T: StepElement, epsilon: Number, horizon: int = 64,
                         cap: int = DEFAULT_RETURN_CAP) -> KernelResult:
    """Periodic approximation of an index-zero element through its certified Hopf split."""
    eps = Q(epsilon)
    p = T.params
    if T.index() != 0:
        raise ValueError("index is not zero")
    sup = T.support
    supp = mu(sup, p)
    if not T.rules:
        return KernelResult(T, ZERO, ZERO, ZERO, {})
    cons = EMPTY_RECTS
    diss = EMPTY_RECTS
    for w in (ONE, Q(1) / 2, Q(1) / 4):
        v = hopf(T, Tessellation(build_cross_section(IntervalSet.span(0, w), p)), horizon)
        cons = cons | v.conservative
        diss = diss | v.dissipative
    diss = diss - cons
    parts, branches, covered = [], {}, ZERO
    # the branches act on disjoint invariant sets, so their errors add
    share = eps / 2 if cons and diss else eps
    if cons:
        Tc = restrict_to_invariant(T, cons)
        Pc, rep = approx_conservative_by_periodic(Tc, share, cap)
        parts.append(Pc)
        covered = covered + mu(cons, p) - rep.uncovered
        branches["conservative"] = rep.to_json()
    if diss:
        Td = restrict_to_invariant(T, diss)
        if Td.index() == 0 and monotone_certificate(Td).ok:
            Pd, rep = periodic_from_monotone_auto(Td, share, cap=cap)
            parts.append(Pd)
            covered = covered + mu(diss, p) - rep["defect_measure"]
            branches["dissipative"] = {"measured_error": _scalar_json(rep["measured_error"]),
                                       "defect_measure": _scalar_json(rep["defect_measure"])}
        else:
            branches["dissipative"] = {"status": "not monotone of index zero", "measure": _scalar_json(mu(diss, p))}
    P = _disjoint_union(*parts) if parts else StepElement.identity(p)
    branches["undecided_measure"] = _scalar_json(mu(sup - cons - diss, p))
    return KernelResult(P, cocycle_distance(T, P), covered, supp, branches)


def _scalar_json(v) -> dict:
    v = Q(v)
    return {"exact": v.exact_str(), "decimal": v.display()}
