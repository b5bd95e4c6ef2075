"""Command-line harness: ``build``, ``compute``, ``verify``, ``export`` and ``import``.

Exit codes: 0 success, 1 a verification check failed, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import random
import sys
from fractions import Fraction
from pathlib import Path

from .approx import kernel_approximation, monotone_templates
from .castles import build_thm61
from .commensurator import TailedTranslation, charge_index, index_value
from .exactnum import IntervalSet, Q, QuadScalar
from .flow import FlowParams, RectSet, Tessellation, build_cross_section, mu
from .fullgroup import (
    StepElement,
    cell_rotation,
    flow_element,
    hopf,
    monotone_certificate,
    periodic_part,
    random_element,
)
from .verification import SUITES, SuiteConfig, run_suites

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
BUILD_KINDS = ("const-flow", "cell-rotation", "thm61", "random-step", "monotone-template")
METRICS = ("norm", "index", "max-shift", "support", "periodic", "monotone", "hopf", "approx", "charge")
CSV_FIELDS = ("shift", "theta_lo", "theta_hi", "s_lo", "s_hi", "alpha", "roof")


class UsageError(Exception):
    pass


def _scalar(text: str) -> QuadScalar:
    try:
        return Q(text)
    except (ValueError, TypeError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not an exact scalar: {text!r}") from exc


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from exc


def _dump(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------- element files


def load_document(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise UsageError(f"no such file: {path}") from exc
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise UsageError(f"{path} is not an element file: {exc}") from exc


def load_element(path: str):
    """StepElement or TailedTranslation stored in ``path`` (snapshots yield their element)."""
    doc = load_document(path)
    try:
        if "S" in doc:
            return StepElement.from_json(doc["S"])
        if "window" in doc:
            return TailedTranslation.from_json(doc)
        if "pieces" in doc:
            return StepElement.from_json(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"{path}: malformed element ({exc})") from exc
    raise UsageError(f"{path}: no element found")


def element_document(T: StepElement, kind: str, **meta) -> dict:
    return {"kind": kind, "meta": {k: str(v) for k, v in meta.items()}, **T.to_json()}


def element_rows(T: StepElement) -> list[dict]:
    rows = []
    a, h = T.params.alpha.exact_str(), T.params.roof.exact_str()
    for t, A in T.rules.items():
        for th, s in A.rects():
            rows.append({"shift": t.exact_str(), "theta_lo": th.lo.exact_str(), "theta_hi": th.hi.exact_str(),
                         "s_lo": s.lo.exact_str(), "s_hi": s.hi.exact_str(), "alpha": a, "roof": h})
    return rows


def element_from_rows(rows: list[dict]) -> StepElement:
    if not rows:
        return StepElement.identity()
    params = FlowParams(Q(rows[0]["alpha"]), Q(rows[0]["roof"]))
    pieces = []
    for r in rows:
        rect = RectSet.rect(Q(r["theta_lo"]), Q(r["theta_hi"]), Q(r["s_lo"]), Q(r["s_hi"]))
        pieces.append((rect, Q(r["shift"])))
    return StepElement.from_pieces(pieces, params)


# --------------------------------------------------------------------------- commands


def cmd_build(args) -> int:
    kind = args.kind
    if kind == "const-flow":
        if args.t is None:
            raise UsageError("const-flow needs --t")
        doc = element_document(flow_element(args.t), kind, t=args.t.exact_str())
    elif kind == "cell-rotation":
        tess = Tessellation(build_cross_section(IntervalSet.span(0, args.base_width), FlowParams()))
        doc = element_document(cell_rotation(tess, args.fraction), kind, base_width=args.base_width.exact_str(),
                               fraction=args.fraction.exact_str())
    elif kind == "thm61":
        try:
            state = build_thm61(args.levels)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        doc = {"kind": kind, **state.to_json()}
    elif kind == "random-step":
        T = random_element(random.Random(args.seed), FlowParams(), args.moves)
        doc = element_document(T, kind, seed=args.seed, moves=args.moves)
    else:
        templates = dict(monotone_templates())
        if args.template not in templates:
            raise UsageError(f"unknown template {args.template!r}; choose from {', '.join(templates)}")
        doc = element_document(templates[args.template], kind, template=args.template)
    _dump(doc, args.out)
    return EXIT_OK


def _print_scalar(v) -> None:
    print(Q(v).display())


def cmd_compute(args) -> int:
    T = load_element(args.element)
    m = args.metric
    if isinstance(T, TailedTranslation):
        if m == "index":
            _print_scalar(index_value(T))
        elif m == "charge":
            _print_scalar(charge_index(T))
        else:
            raise UsageError(f"metric {m!r} is not defined for line maps")
        return EXIT_OK
    if not T.is_valid():
        raise UsageError(f"{args.element}: pieces overlap or images collide")
    if m == "norm":
        _print_scalar(T.norm_l1())
    elif m == "index":
        _print_scalar(T.index())
    elif m == "max-shift":
        _print_scalar(T.max_shift())
    elif m == "support":
        _print_scalar(mu(T.support, T.params))
    elif m == "periodic":
        res = periodic_part(T, args.cap)
        print("periodic" if not res.residual else f"not periodic within {args.cap} steps "
              f"(measure {res.residual_measure.display()} open)")
    elif m == "monotone":
        cert = monotone_certificate(T)
        print(json.dumps({"certified": cert.ok, "forward": mu(cert.forward, T.params).display(),
                          "backward": mu(cert.backward, T.params).display(),
                          "uncertified": mu(cert.uncertified, T.params).display()}, indent=2))
    elif m == "hopf":
        v = hopf(T, Tessellation(build_cross_section(IntervalSet.span(0, args.base_width), T.params)), args.horizon)
        print(json.dumps({k: mu(getattr(v, k), T.params).display() for k in ("dissipative", "conservative", "undecided")},
                         indent=2))
    elif m == "approx":
        out = kernel_approximation(T, args.epsilon, horizon=args.horizon, cap=args.cap)
        _dump({"result": out.to_json(), "P": out.P.to_json()}, args.out)
    else:
        raise UsageError(f"metric {m!r} needs a line map")
    return EXIT_OK


def cmd_verify(args) -> int:
    overrides = {"seed": args.seed, "levels": args.levels, "cap": args.cap, "epsilon": args.epsilon,
                 "out": args.out, "csv_dir": args.csv}
    try:
        cfg = SuiteConfig.from_file(args.config, **overrides) if args.config else SuiteConfig().with_overrides(**overrides)
    except (OSError, ValueError, configparser.Error) as exc:
        raise UsageError(f"config error: {exc}") from exc
    try:
        results = run_suites(args.suite, cfg)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from exc
    for r in results:
        print(r.summary())
        if cfg.csv_dir:
            r.write_csv(cfg.csv_dir)
    ok = all(r.passed for r in results)
    print("PASS" if ok else "FAIL")
    if cfg.out:
        _dump({"config": cfg.to_json(), "passed": ok, "suites": [r.to_json() for r in results]}, cfg.out)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_export(args) -> int:
    T = load_element(args.element)
    if isinstance(T, TailedTranslation):
        raise UsageError("export handles flow elements")
    if args.format == "json":
        _dump(T.to_json(), args.out)
        return EXIT_OK
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS)
    writer.writeheader()
    writer.writerows(element_rows(T))
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_import(args) -> int:
    try:
        with open(args.table, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except FileNotFoundError as exc:
        raise UsageError(f"no such file: {args.table}") from exc
    try:
        T = element_from_rows(rows)
    except (KeyError, ValueError, TypeError) as exc:
        raise UsageError(f"{args.table}: malformed table ({exc})") from exc
    if not T.is_valid():
        raise UsageError(f"{args.table}: pieces do not form a bijection")
    _dump(element_document(T, "imported", source=args.table), args.out)
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="l1flow", description="Exact step elements of a suspension flow.")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="write a named element as JSON")
    b.add_argument("kind", choices=BUILD_KINDS)
    b.add_argument("--t", type=_scalar, help="flow time for const-flow")
    b.add_argument("--fraction", type=_scalar, default=Q("1/3"), help="rotation fraction for cell-rotation")
    b.add_argument("--base-width", type=_scalar, default=Q("1/2"), help="section base [0, w)")
    b.add_argument("--levels", type=int, default=3)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--moves", type=int, default=2)
    b.add_argument("--template", default=monotone_templates()[0][0])
    b.add_argument("--out")
    b.set_defaults(func=cmd_build)

    c = sub.add_parser("compute", help="evaluate a metric on an element file")
    c.add_argument("metric", choices=METRICS)
    c.add_argument("element")
    c.add_argument("--cap", type=int, default=1024)
    c.add_argument("--horizon", type=int, default=64)
    c.add_argument("--base-width", type=_scalar, default=Q("1/2"))
    c.add_argument("--epsilon", type=_scalar, default=Q("1/4"))
    c.add_argument("--out")
    c.set_defaults(func=cmd_compute)

    v = sub.add_parser("verify", help="run verification suites")
    v.add_argument("suite", nargs="+", help=f"one or more of: all, {', '.join(SUITES)}")
    v.add_argument("--config", help="key = value file with a [suite] section")
    v.add_argument("--seed", type=int)
    v.add_argument("--levels", type=int)
    v.add_argument("--cap", type=int)
    v.add_argument("--epsilon", type=_fraction)
    v.add_argument("--out", help="JSON report path")
    v.add_argument("--csv", help="directory for CSV diagnostics")
    v.set_defaults(func=cmd_verify)

    e = sub.add_parser("export", help="write an element as a CSV piece table or plain JSON")
    e.add_argument("element")
    e.add_argument("--format", choices=("csv", "json"), default="csv")
    e.add_argument("--out")
    e.set_defaults(func=cmd_export)

    i = sub.add_parser("import", help="read a CSV piece table into an element file")
    i.add_argument("table")
    i.add_argument("--out")
    i.set_defaults(func=cmd_import)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
