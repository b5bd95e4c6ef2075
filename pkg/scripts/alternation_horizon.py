"""Fraction of sampled orbits whose displacement alternates, as the horizon grows."""
import argparse
from dataclasses import dataclass, field

from l1flow.castles import build_thm61, sign_alternation_stats


@dataclass
class Config:
    levels: int = 6
    samples: int = 1000
    seed: int = 1
    horizons: list = field(default_factory=lambda: [16, 64, 256])


def main(cfg: Config) -> None:
    S = build_thm61(cfg.levels).S
    for h in cfg.horizons:
        st = sign_alternation_stats(S, cfg.samples, h, cfg.seed)
        print(f"horizon {h:5d}: {st.fraction.display()}", flush=True)


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--levels", type=int, default=Config.levels)
    ap.add_argument("--samples", type=int, default=Config.samples)
    ap.add_argument("--seed", type=int, default=Config.seed)
    ap.add_argument("--horizons", type=int, nargs="+", default=[16, 64, 256])
    main(Config(**vars(ap.parse_args())))
