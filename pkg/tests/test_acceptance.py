"""Acceptance battery: one PASS/FAIL line per criterion.

Run ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
Thresholds are the ``SuiteConfig`` defaults; nothing is relaxed here.
"""
from fractions import Fraction
from functools import lru_cache

import pytest

from l1flow.approx import monotone_templates
from l1flow.verification import SUITES, SuiteConfig

CFG = SuiteConfig()

# criterion -> (title, suites, wall-clock limit in seconds or None)
CRITERIA = {
    1: ("index is additive on 500 + 500 pairs", ("index",), 30),
    2: ("ambient formula and restriction invariance on 500 cases", ("commensurator",), None),
    3: ("first-return norm bound on 200 pairs, residual < 1e-6", ("first-return",), None),
    4: ("intermitted and cell-restricted norm bounds", ("intermitted",), None),
    5: ("bounded wiggling element at levels 1-6", ("thm61", "alternation"), 300),
    6: ("single-section periodic bound on the monotone battery", ("monotone",), None),
    7: ("index-zero elements approximated by periodic ones", ("kernel",), None),
    8: ("Kac identity, Voronoi partition, group laws", ("flow",), None),
    9: ("charge equals half-line index on 200 cases", ("charge",), None),
}


@lru_cache(maxsize=None)
def suite(name):
    return SUITES[name](CFG)


def evaluate(n):
    title, names, limit = CRITERIA[n]
    results = [suite(s) for s in names]
    notes = []
    ok = all(r.passed for r in results)
    for r in results:
        for c in r.failures()[:3]:
            notes.append(f"{r.suite}/{c.case}/{c.name}: {c.detail}")
    elapsed = sum(r.elapsed for r in results)
    if limit is not None and elapsed >= limit:
        ok = False
        notes.append(f"took {elapsed:.1f}s, limit {limit}s")
    if n == 3:
        res = results[0].metrics.get("residual_measure", "")
        exact_res = Fraction(res.split()[0]) if res and "sqrt" not in res else None
        if exact_res is None or exact_res >= Fraction(1, 10 ** 6):
            ok = False
            notes.append(f"residual {res}")
    if n == 6 and len(monotone_templates()) < 10:
        ok = False
        notes.append("fewer than 10 templates")
    checks = sum(len(r.checks) for r in results)
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {title} [{checks} checks, {elapsed:.1f}s]"
    if notes:
        line += " -- " + "; ".join(notes)
    return ok, line


@pytest.mark.acceptance
@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n, capsys):
    ok, line = evaluate(n)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


if __name__ == "__main__":
    for n in sorted(CRITERIA):
        print(evaluate(n)[1], flush=True)
