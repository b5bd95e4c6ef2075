"""Verification suites shared by the command line and the acceptance tests.

Each suite returns a :class:`SuiteResult` holding named exact checks.  Thresholds come
from :class:`SuiteConfig`, so a run is reproducible from ``(seed, config)``.
"""
from __future__ import annotations

import configparser
import csv
import random
import time
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Callable, Optional

from .approx import (
    PeriodicApproxParams,
    conservative_templates,
    kernel_approximation,
    monotone_templates,
    periodic_from_monotone,
    section_diagnostics,
    sparse_section,
)
from .castles import (
    build_thm61,
    castle_support,
    castle_validate_cells,
    level_tessellation,
    max_abs_shift,
    rank_one_diagnostic,
    sign_alternation_stats,
    translation_conditions,
)
from .commensurator import (
    HALF_LINE,
    ambient_index,
    charge_index,
    charge_index_by_sets,
    comm_compose,
    comm_restrict,
    index_value,
    random_ambient,
    random_cofinite,
    random_tailed,
)
from .exactnum import ONE, ZERO, Interval, IntervalSet, Q, QuadScalar, sum_scalars
from .flow import (
    VORONOI,
    FlowParams,
    RectSet,
    Tessellation,
    build_cross_section,
    mu,
    phase_space,
)
from .fullgroup import (
    StepElement,
    cell_rotation,
    differ_set,
    flow_element,
    induced,
    intermitted,
    periodic_part,
    random_element,
    union_all,
)


@dataclass
class SuiteConfig:
    """Counts, caps and thresholds for the verification suites."""

    seed: int = 1
    index_pairs: int = 500
    index_cases: int = 500
    first_return_pairs: int = 200
    group_triples: int = 200
    kac_sections: int = 50
    commutator_pairs: int = 200
    charge_cases: int = 200
    levels: int = 6
    alternation_samples: int = 1000
    alternation_horizon: int = 64
    alternation_threshold: Fraction = Fraction(95, 100)
    coverage_threshold: Fraction = Fraction(99, 100)
    residual_threshold: Fraction = Fraction(1, 10 ** 6)
    cap: int = 1024
    epsilon: Fraction = Fraction(1, 4)
    roof: Fraction = Fraction(1)
    out: Optional[str] = None
    csv_dir: Optional[str] = None

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "SuiteConfig":
        """Read a ``[suite]`` section of ``key = value`` lines; keyword overrides win."""
        parser = configparser.ConfigParser()
        if not parser.read(path):
            raise FileNotFoundError(path)
        if not parser.has_section("suite"):
            raise ValueError("config file needs a [suite] section")
        values = {}
        known = {f.name: f for f in fields(cls)}
        for key, raw in parser.items("suite"):
            key = key.replace("-", "_")
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            values[key] = _coerce(known[key].default, raw)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def with_overrides(self, **overrides) -> "SuiteConfig":
        kept = {f.name: getattr(self, f.name) for f in fields(self)}
        kept.update({k: v for k, v in overrides.items() if v is not None})
        return SuiteConfig(**kept)

    @property
    def params(self) -> FlowParams:
        return FlowParams(roof=Q(self.roof))

    def to_json(self) -> dict:
        return {f.name: (str(getattr(self, f.name)) if isinstance(getattr(self, f.name), Fraction)
                         else getattr(self, f.name)) for f in fields(self)}


def _coerce(default, raw: str):
    raw = raw.strip()
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, Fraction):
        return Fraction(raw)
    if raw.lower() in ("", "none"):
        return None
    return raw


@dataclass
class Check:
    case: str
    name: str
    passed: bool
    detail: str = ""

    def to_json(self) -> dict:
        return {"case": self.case, "name": self.name, "passed": self.passed, "detail": self.detail}


@dataclass
class SuiteResult:
    suite: str
    checks: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    rows: dict = field(default_factory=dict)  # csv table name -> list of dicts
    elapsed: float = 0.0

    def check(self, case: str, name: str, passed: bool, detail: str = "") -> bool:
        self.checks.append(Check(case, name, bool(passed), detail))
        return bool(passed)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def summary(self) -> str:
        bad = self.failures()
        head = f"{self.suite}: {len(self.checks) - len(bad)}/{len(self.checks)} checks passed in {self.elapsed:.1f}s"
        lines = [head] + [f"  {k}: {v}" for k, v in sorted(self.metrics.items())]
        lines += [f"  FAILED {c.case} {c.name} {c.detail}" for c in bad[:20]]
        return "\n".join(lines)

    def to_json(self) -> dict:
        return {"suite": self.suite, "passed": self.passed, "elapsed": round(self.elapsed, 3),
                "metrics": self.metrics,
                "checks": [c.to_json() for c in sorted(self.checks, key=lambda c: (c.case, c.name))]}

    def write_csv(self, directory: str | Path) -> list[Path]:
        out = []
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name, rows in self.rows.items():
            if not rows:
                continue
            path = directory / f"{name}.csv"
            with path.open("w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
                writer.writeheader()
                writer.writerows(rows)
            out.append(path)
        return out


def exact(v) -> str:
    v = Q(v)
    return v.display()


def _timed(name: str, body: Callable[[SuiteResult], None]) -> SuiteResult:
    res = SuiteResult(name)
    t0 = time.perf_counter()
    body(res)
    res.elapsed = time.perf_counter() - t0
    return res


def random_rects(rng: random.Random, params: FlowParams, count: int = 2) -> RectSet:
    parts = []
    h = params.roof
    for _ in range(rng.randint(1, count)):
        d = rng.choice((2, 3, 4, 8))
        a = Q(rng.randrange(d)) / d
        u = h * Q(rng.randrange(4)) / 4
        parts.append(RectSet.rect(a, a + Q(1) / d, u, u + h * Q(rng.randint(1, 3)) / 4))
    return union_all(parts)


def random_base(rng: random.Random) -> IntervalSet:
    parts = []
    for _ in range(rng.randint(1, 3)):
        d = rng.choice((2, 3, 4, 5, 8, 16))
        a = Q(rng.randrange(d)) / d
        parts.append(Interval(a, a + Q(1) / (d * rng.randint(1, 2))))
    return IntervalSet(parts)


# --------------------------------------------------------------------------- suites


def suite_index(cfg: SuiteConfig) -> SuiteResult:
    """Index is additive under composition, for tailed translations and step elements."""
    def body(res):
        rng = random.Random(cfg.seed)
        for i in range(cfg.index_pairs):
            T, S = random_tailed(rng), random_tailed(rng)
            lhs, rhs = index_value(comm_compose(T, S)), index_value(T) + index_value(S)
            res.check(f"tailed-{i:04d}", "additive", lhs == rhs, f"{exact(lhs)} vs {exact(rhs)}")
        p = cfg.params
        for i in range(cfg.index_pairs):
            T, S = random_element(rng, p), random_element(rng, p)
            lhs, rhs = T.compose(S).index(), T.index() + S.index()
            res.check(f"step-{i:04d}", "additive", lhs == rhs, f"{exact(lhs)} vs {exact(rhs)}")
    return _timed("index", body)


def suite_commensurator(cfg: SuiteConfig) -> SuiteResult:
    """Ambient-set formula, restriction invariance and equivalence invariance of the index."""
    def body(res):
        rng = random.Random(cfg.seed + 1)
        for i in range(cfg.index_cases):
            T = random_tailed(rng)
            A = random_ambient(rng, T)
            a, b = ambient_index(T, A), index_value(T)
            res.check(f"ambient-{i:04d}", "ambient_formula", a == b, f"{exact(a)} vs {exact(b)}")
        for i in range(cfg.index_cases):
            T = random_tailed(rng)
            A = random_cofinite(rng, T)
            a, b = index_value(comm_restrict(T, A)), index_value(T)
            res.check(f"restrict-{i:04d}", "restriction_invariance", a == b, f"{exact(a)} vs {exact(b)}")
    return _timed("commensurator", body)


def suite_first_return(cfg: SuiteConfig) -> SuiteResult:
    """The induced map is never longer than the map itself."""
    def body(res):
        rng = random.Random(cfg.seed + 2)
        p = cfg.params
        residual = ZERO
        rows = []
        for i in range(cfg.first_return_pairs):
            T = random_element(rng, p)
            A = random_rects(rng, p)
            ret = _quiet_induced(T, A, cfg.cap)
            nA, nT = ret.partial().norm_l1(), T.norm_l1()
            residual = residual + ret.residual_measure
            res.check(f"pair-{i:03d}", "induced_norm", nA <= nT, f"{exact(nA)} <= {exact(nT)}")
            rows.append({"case": i, "norm_T": nT.exact_str(), "norm_induced": nA.exact_str(),
                         "residual": ret.residual_measure.exact_str()})
        res.check("total", "residual_below_threshold", residual < Q(cfg.residual_threshold), exact(residual))
        res.metrics["residual_measure"] = exact(residual)
        res.rows["first_return"] = rows
    return _timed("first-return", body)


def _quiet_induced(T, A, cap):
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return induced(T, A, cap)


def conservative_battery(cfg: SuiteConfig) -> list[tuple[str, StepElement, Tessellation]]:
    """Elements with tessellations for the intermitted estimates."""
    p = cfg.params
    out = []
    for w in (Q(1) / 2, Q(1) / 4):
        tess = Tessellation(build_cross_section(IntervalSet.span(0, w), p))
        out.append((f"cell-rotation-{w.exact_str()}", cell_rotation(tess, Q(1) / 3), tess))
    for name, T in conservative_templates():
        out.append((name, T, Tessellation(build_cross_section(IntervalSet.span(0, Q(1) / 2), T.params))))
    for t in (Q(1) / 2, ONE):
        for w in (ONE, Q(1) / 4):
            out.append((f"flow-{t.exact_str()}-section-{w.exact_str()}", flow_element(t, p),
                        Tessellation(build_cross_section(IntervalSet.span(0, w), p))))
    state = build_thm61(2)
    for n in (1, 2):
        out.append((f"thm61-S-level-{n}", state.S, level_tessellation(state, n)))
    return out


def suite_intermitted(cfg: SuiteConfig) -> SuiteResult:
    """Intermitted maps are shorter than the map, also on the set where the two differ."""
    def body(res):
        import warnings
        rows = []
        for name, T, tess in conservative_battery(cfg):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                ret = intermitted(T, tess, cfg.cap)
            R = ret.element()
            resolved = ret.resolved()
            Y = differ_set(T, R) & resolved
            nR, nT = R.norm_l1(), T.norm_l1()
            yR, yT = R.cocycle_integral(Y), T.cocycle_integral(Y)
            res.check(name, "intermitted_norm", nR <= nT, f"{exact(nR)} <= {exact(nT)}")
            res.check(name, "differ_set_estimate", yR <= yT, f"{exact(yR)} <= {exact(yT)}")
            rows.append({"case": name, "norm_T": nT.exact_str(), "norm_intermitted": nR.exact_str(),
                         "differ_T": yT.exact_str(), "differ_intermitted": yR.exact_str(),
                         "residual": ret.residual_measure.exact_str()})
        res.rows["intermitted"] = rows
    return _timed("intermitted", body)


def suite_thm61(cfg: SuiteConfig, with_alternation: bool = False) -> SuiteResult:
    """Finite stages of the bounded wiggling element: shifts, halving, translations, coverage."""
    def body(res):
        L = cfg.levels
        state = build_thm61(L)
        p = state.params
        coverage_rows = []
        for n in range(1, L + 1):
            lv = state.level(n)
            case = f"level-{n}"
            tess = level_tessellation(state, n)
            for nm, m in (("phi", lv.phi), ("psi", lv.psi)):
                rep = castle_validate_cells(m, tess)
                res.check(case, f"{nm}_is_castle", rep.ok, "; ".join(rep.problems[:2]))
            s = max_abs_shift(lv.phi)
            res.check(case, "phi_shift_at_most_3", s <= 3, exact(s))
            if n < L:
                r = mu(castle_support(state.level(n + 1).psi), p) / mu(castle_support(lv.psi), p)
                res.check(case, "psi_support_halves", r == Q(1) / 2, exact(r))
            problems = translation_conditions(state, n)
            res.check(case, "translation_conditions", not problems, "; ".join(problems))
            cov = rank_one_diagnostic(state, n)
            expect = ONE - Q(1) / 2 ** n
            res.check(case, "rank_one_coverage", cov.proportions == {expect},
                      ", ".join(exact(v) for v in sorted(cov.proportions)))
            for iv, c, y, r in cov.pieces:
                coverage_rows.append({"level": n, "lo": iv.lo.exact_str(), "hi": iv.hi.exact_str(),
                                      "covered": c.exact_str(), "length": y.exact_str(), "proportion": r.exact_str()})
        S = state.S
        s = max_abs_shift(S)
        res.check("S", "shift_at_most_4", s <= 4, exact(s))
        res.check("S", "valid", S.is_valid())
        res.check("S", "index_zero", S.index() == 0, exact(S.index()))
        res.rows["rank_one_coverage"] = coverage_rows
        if with_alternation:
            _alternation(res, S, cfg)
    return _timed("thm61", body)


def _alternation(res: SuiteResult, S: StepElement, cfg: SuiteConfig):
    st = sign_alternation_stats(S, cfg.alternation_samples, cfg.alternation_horizon, cfg.seed)
    frac = st.fraction
    res.check("S", "sign_alternation", frac >= Q(cfg.alternation_threshold),
              f"{exact(frac)} of {st.samples} samples alternate within {st.horizon}")
    res.metrics["alternation_fraction"] = exact(frac)
    res.rows["sign_alternation"] = [{"sample": i, "changes": c} for i, c in enumerate(st.counts)]


def suite_alternation(cfg: SuiteConfig) -> SuiteResult:
    """Displacement of sampled orbits under the finite-stage element changes sign."""
    def body(res):
        _alternation(res, build_thm61(cfg.levels).S, cfg)
    return _timed("alternation", body)


def benchmark_params(T: StepElement):
    """Section and parameters ``K = 2``, ``γ = 4ζ/5``, ``β = 3γ/2`` with ``ζ`` the least near-jump measure."""
    K = Q(2) if T.max_shift() < 2 else T.max_shift()
    tess = Tessellation(sparse_section(K, T.params))
    d = section_diagnostics(T, tess)
    zeta = min(min(d.near_forward.values()), min(d.near_backward.values()))
    gamma = 4 * zeta / 5
    return tess, PeriodicApproxParams(K, 3 * gamma / 2, gamma)


def suite_monotone(cfg: SuiteConfig) -> SuiteResult:
    """Single-section periodic construction on the monotone battery."""
    def body(res):
        rows = []
        for name, T in monotone_templates():
            res.check(name, "index_zero", T.index() == 0, exact(T.index()))
            tess, prm = benchmark_params(T)
            rep = periodic_from_monotone(T, tess, prm, cfg.cap)
            for k, v in rep.checks.items():
                res.check(name, k, v, f"{exact(rep.measured_error)} <= {exact(rep.certified_bound)}" if k == "bound_holds" else "")
            rows.append({"case": name, "measured": rep.measured_error.exact_str(),
                         "bound": rep.certified_bound.exact_str(),
                         **{k: v.exact_str() for k, v in rep.integrals.items()}})
        res.rows["monotone"] = rows
    return _timed("monotone", body)


def kernel_battery() -> list[tuple[str, StepElement]]:
    return monotone_templates() + conservative_templates()


def suite_kernel(cfg: SuiteConfig) -> SuiteResult:
    """Index-zero elements are close to periodic ones; the index kills periodic maps and commutators."""
    def body(res):
        eps = Q(cfg.epsilon)
        rows = []
        for name, T in kernel_battery():
            if T.index() != 0:
                continue
            out = kernel_approximation(T, eps, cap=cfg.cap)
            per = periodic_part(out.P, 4 * cfg.cap)
            res.check(name, "periodic", not per.residual)
            res.check(name, "valid", out.P.is_valid())
            res.check(name, "error_below_epsilon", out.error < eps, exact(out.error))
            res.check(name, "coverage", out.coverage >= Q(cfg.coverage_threshold), exact(out.coverage))
            res.check(name, "periodic_index_zero", out.P.index() == 0)
            rows.append({"case": name, "error": out.error.exact_str(), "coverage": out.coverage.exact_str()})
        res.rows["kernel"] = rows
        rng = random.Random(cfg.seed + 3)
        p = cfg.params
        for i in range(cfg.commutator_pairs):
            T, S = random_element(rng, p), random_element(rng, p)
            c = T.commutator(S).index()
            res.check(f"commutator-{i:03d}", "index_zero", c == 0, exact(c))
    return _timed("kernel", body)


def suite_flow(cfg: SuiteConfig) -> SuiteResult:
    """Kac identity, Voronoi partition and group laws of step elements."""
    def body(res):
        rng = random.Random(cfg.seed + 4)
        p = cfg.params
        X = phase_space(p)
        for i in range(cfg.kac_sections):
            C = build_cross_section(random_base(rng), p)
            k = C.kac_sum()
            res.check(f"section-{i:02d}", "kac_identity", k == 1, exact(k))
            regions = [A for _, A in Tessellation(C, VORONOI).cell_regions()]
            total = sum_scalars(mu(A, p) for A in regions)
            res.check(f"section-{i:02d}", "voronoi_measure_one", total == 1, exact(total))
            res.check(f"section-{i:02d}", "voronoi_cover", union_all(regions) == X)
        for i in range(cfg.group_triples):
            T, S, R = (random_element(rng, p) for _ in range(3))
            case = f"triple-{i:03d}"
            res.check(case, "associative", T.compose(S).compose(R) == T.compose(S.compose(R)))
            res.check(case, "inverse", T.compose(T.inverse()) == StepElement.identity(p))
            res.check(case, "identity", T.compose(StepElement.identity(p)) == T)
            res.check(case, "valid", T.compose(S).is_valid())
    return _timed("flow", body)


def suite_charge(cfg: SuiteConfig) -> SuiteResult:
    """Crossing charge over the basepoint equals the index of the restriction to the half-line."""
    def body(res):
        rng = random.Random(cfg.seed + 5)
        for i in range(cfg.charge_cases):
            T = random_tailed(rng, bijective=True)
            a = charge_index(T)
            b = index_value(comm_restrict(T, HALF_LINE))
            c = charge_index_by_sets(T)
            res.check(f"case-{i:03d}", "charge_equals_index", a == b == c, f"{exact(a)} {exact(b)} {exact(c)}")
    return _timed("charge", body)


SUITES: dict[str, Callable[[SuiteConfig], SuiteResult]] = {
    "index": suite_index,
    "commensurator": suite_commensurator,
    "first-return": suite_first_return,
    "intermitted": suite_intermitted,
    "thm61": suite_thm61,
    "alternation": suite_alternation,
    "monotone": suite_monotone,
    "kernel": suite_kernel,
    "flow": suite_flow,
    "charge": suite_charge,
}


def run_suites(names: list[str], cfg: SuiteConfig) -> list[SuiteResult]:
    if names == ["all"]:
        names = list(SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s): {', '.join(unknown)}")
    return [SUITES[n](cfg) for n in sorted(names, key=list(SUITES).index)]
