"""Single-section periodic construction on every monotone template: measured error vs bound."""
import argparse
from dataclasses import dataclass

from l1flow.approx import monotone_templates, periodic_from_monotone
from l1flow.verification import benchmark_params


@dataclass
class Config:
    cap: int = 1024
    only: str | None = None


def main(cfg: Config) -> None:
    print(f"{'template':18s} {'measured':>24s} {'bound':>24s}  checks")
    for name, T in monotone_templates():
        if cfg.only and name != cfg.only:
            continue
        tess, prm = benchmark_params(T)
        rep = periodic_from_monotone(T, tess, prm, cfg.cap)
        failed = [k for k, v in rep.checks.items() if not v]
        print(f"{name:18s} {rep.measured_error.display():>24s} {rep.certified_bound.display():>24s}  "
              f"{'all pass' if not failed else failed}", flush=True)


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cap", type=int, default=Config.cap)
    ap.add_argument("--only")
    main(Config(**vars(ap.parse_args())))
