"""Viscous Burgers' study: simulate, train, evaluate and print the headline numbers.

    python3 scripts/run_burgers.py [--profile paper|desk] [--output DIR]
"""

import argparse
import time

from epopinf.config import builtin_config
from epopinf.io import read_csv
from epopinf.pipeline import run_evaluate, run_simulate, run_train
from epopinf.pod import energy_retained


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--profile", choices=("paper", "desk"), default="paper")
    parser.add_argument("--output", default="runs/burgers")
    args = parser.parse_args()

    cfg = builtin_config("burgers", args.profile).with_overrides(output_dir=args.output)
    t0 = time.perf_counter()
    run_simulate(cfg, cfg.output_dir)
    basis, _ = run_train(cfg, cfg.output_dir)
    run_evaluate(cfg, cfg.output_dir)
    print(f"finished in {time.perf_counter() - t0:.1f}s; outputs in {cfg.output_dir}")
    print(f"retained energy at r={cfg.r_max}: {energy_retained(basis.sigma, cfg.r_max):.10f}")

    viol = read_csv(f"{cfg.output_dir}/results/violation_vs_r.csv")
    err = read_csv(f"{cfg.output_dir}/results/training_error_vs_r.csv")
    print(f"{'r':>3} | {'violation: intrusive':>20} {'opinf':>10} {'ep-opinf':>10} | "
          f"{'train error: intrusive':>22} {'opinf':>10} {'ep-opinf':>10}")
    by_r = {row["r"]: row for row in err}
    for row in viol:
        e = by_r.get(row["r"])
        cells = [float(row[m]) for m in ("intrusive", "opinf", "ep-opinf")]
        errs = [float(e[m]) for m in ("intrusive", "opinf", "ep-opinf")] if e else [float("nan")] * 3
        print(f"{row['r']:>3} | {cells[0]:20.2e} {cells[1]:10.2e} {cells[2]:10.2e} | "
              f"{errs[0]:22.2e} {errs[1]:10.2e} {errs[2]:10.2e}")


if __name__ == "__main__":
    main()
