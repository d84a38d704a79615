#!/usr/bin/env python3
"""Fit the end-to-end convergence rate of the double-loop solver.

Runs a multi-seed ensemble over a grid of outer horizons N for one schedule
regime, fits the error metric against N on a log-log scale, and writes the
fit plus the raw points to CSV.

Usage: python3 scripts/rate_experiment.py [regime] [--out DIR] [--seed S]
                                          [--runs R] [--grid N1,N2,...]
"""

import argparse
from pathlib import Path

from zobilevel import REGIMES
from zobilevel.verify import (check_rates, write_rate_points_csv,
                              write_ratefits_csv)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("regime", nargs="?", default="strongly-convex",
                        choices=REGIMES)
    parser.add_argument("--out", default="rate-out")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--runs", type=int, default=10)
    parser.add_argument("--grid", default="100,200,400,800,1600,3200")
    args = parser.parse_args()

    grid = tuple(int(v) for v in args.grid.split(","))
    fit = check_rates(args.regime, N_grid=grid, runs=args.runs, seed=args.seed)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_ratefits_csv(out / f"rate-{args.regime}.csv", [fit])
    write_rate_points_csv(out / f"rate-{args.regime}-points.csv", [fit])

    verdict = "PASS" if fit.passed else "FAIL"
    print(f"{args.regime}: slope {fit.slope:.4f} "
          f"(window [{fit.accept_lo}, {fit.accept_hi}], "
          f"r^2 {fit.r_squared:.4f}) -> {verdict}")
    return 0 if fit.passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
