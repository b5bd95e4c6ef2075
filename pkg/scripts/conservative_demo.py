"""Hopf split and periodic approximation of the conservative templates."""
import argparse
from dataclasses import dataclass
from fractions import Fraction

from l1flow.approx import approx_conservative_by_periodic, conservative_templates
from l1flow.exactnum import Q
from l1flow.flow import mu


@dataclass
class Config:
    epsilon: Fraction = Fraction(1, 4)


def main(cfg: Config) -> None:
    eps = Q(cfg.epsilon)
    for name, T in conservative_templates():
        P, rep = approx_conservative_by_periodic(T, eps)
        print(f"{name:20s} supp {mu(T.support, T.params).display():>14s}  error {rep.error.display()}", flush=True)


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epsilon", type=Fraction, default=Config.epsilon)
    main(Config(**vars(ap.parse_args())))
