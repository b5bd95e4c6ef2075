"""Approximate each index-zero battery element by a periodic one at a chosen epsilon."""
import argparse
from dataclasses import dataclass
from fractions import Fraction

from l1flow.approx import kernel_approximation
from l1flow.exactnum import Q
from l1flow.verification import kernel_battery


@dataclass
class Config:
    epsilon: Fraction = Fraction(1, 4)
    cap: int = 1024


def main(cfg: Config) -> None:
    eps = Q(cfg.epsilon)
    for name, T in kernel_battery():
        if T.index() != 0:
            print(f"{name:18s} skipped (index {T.index().display()})")
            continue
        out = kernel_approximation(T, eps, cap=cfg.cap)
        print(f"{name:18s} error {out.error.display():>26s}  coverage {out.coverage.display()}", flush=True)


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epsilon", type=Fraction, default=Config.epsilon)
    ap.add_argument("--cap", type=int, default=Config.cap)
    main(Config(**vars(ap.parse_args())))
