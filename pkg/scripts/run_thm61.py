"""Build the bounded wiggling element level by level and print its audits."""
import argparse
import json
import time
from dataclasses import dataclass

from l1flow.castles import (
    build_thm61,
    castle_support,
    max_abs_shift,
    rank_one_diagnostic,
    sign_alternation_stats,
    translation_conditions,
)
from l1flow.flow import mu


@dataclass
class Config:
    levels: int = 6
    samples: int = 1000
    horizon: int = 64
    seed: int = 1
    snapshot: str | None = None


def main(cfg: Config) -> None:
    t0 = time.perf_counter()
    state = build_thm61(cfg.levels)
    p = state.params
    print(f"built {cfg.levels} levels in {time.perf_counter() - t0:.2f}s")
    prev = None
    for n in range(1, cfg.levels + 1):
        lv = state.level(n)
        supp = mu(castle_support(lv.psi), p)
        ratio = (supp / prev).display() if prev is not None else "-"
        prev = supp
        cov = sorted(rank_one_diagnostic(state, n).proportions)
        bad = translation_conditions(state, n)
        print(f"level {n}: max|phi| {max_abs_shift(lv.phi).display()}  supp psi {supp.display()}  "
              f"ratio {ratio}  coverage {[c.display() for c in cov]}  translation {'ok' if not bad else bad}")
    S = state.S
    print(f"S: max shift {max_abs_shift(S).display()}, index {S.index().display()}, valid {S.is_valid()}")
    st = sign_alternation_stats(S, cfg.samples, cfg.horizon, cfg.seed)
    print(f"sign alternation within {cfg.horizon}: {st.fraction.display()} of {st.samples}")
    if cfg.snapshot:
        with open(cfg.snapshot, "w") as fh:
            json.dump(state.to_json(), fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--levels", type=int, default=Config.levels)
    ap.add_argument("--samples", type=int, default=Config.samples)
    ap.add_argument("--horizon", type=int, default=Config.horizon)
    ap.add_argument("--seed", type=int, default=Config.seed)
    ap.add_argument("--snapshot")
    main(Config(**vars(ap.parse_args())))
