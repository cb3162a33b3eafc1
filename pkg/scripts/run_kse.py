"""Kuramoto-Sivashinsky study: full pipeline plus a NACE summary per evaluation set.

    python3 scripts/run_kse.py [--profile desk|paper] [--output DIR]

The paper profile (n = 512, T = 300, r_max = 24) takes hours; desk takes minutes.
"""

import argparse
import time
from pathlib import Path

from epopinf.config import builtin_config
from epopinf.io import read_csv
from epopinf.pipeline import run_evaluate, run_simulate, run_train

METHODS = ("intrusive", "opinf", "ep-opinf")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--profile", choices=("desk", "paper"), default="desk")
    parser.add_argument("--output", default="runs/kse")
    args = parser.parse_args()

    cfg = builtin_config("kse", args.profile).with_overrides(output_dir=args.output)
    t0 = time.perf_counter()
    run_simulate(cfg, cfg.output_dir)
    run_train(cfg, cfg.output_dir)
    run_evaluate(cfg, cfg.output_dir)
    print(f"finished in {time.perf_counter() - t0:.1f}s; outputs in {cfg.output_dir}")

    for path in sorted(Path(cfg.output_dir, "results").glob("*_nace_vs_r.csv")):
        print(f"\nNACE, {path.name.removesuffix('_nace_vs_r.csv')} set")
        print(f"{'r':>3} " + " ".join(f"{m:>12}" for m in METHODS))
        for row in read_csv(path):
            print(f"{row['r']:>3} " + " ".join(f"{float(row[m]):12.3e}" for m in METHODS))
    viol = read_csv(Path(cfg.output_dir, "results", "violation_vs_r.csv"))
    worst = {m: max(float(row[m]) for row in viol) for m in METHODS}
    print("\nmax EP violation over r: " + ", ".join(f"{m} {v:.1e}" for m, v in worst.items()))


if __name__ == "__main__":
    main()
