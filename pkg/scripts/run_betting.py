"""Spread-betting table plus the variance-ordering batches.

Writes betting_summary.csv and betting_hist.csv through the CLI, then
betting_batches.csv with per-batch variances of Standard and E-E.
"""
import argparse
import os

from bcrmdp import bench
from bcrmdp.cli import main, parse_config


def batches(cfg, n_batches, out):
    cache = bench.SolverCache()
    rows = []
    for n in (5, 10):
        for b in range(n_batches):
            res = bench.run_spread_betting(cfg, batch=b, n_history=(n,), models=("standard", "bcr_e_e"), cache=cache)
            for model, _, mean, var, _ in bench.betting_summary(res):
                rows.append((model, n, b, mean, var))
    bench.write_csv(os.path.join(out, "betting_batches.csv"), ("model", "N", "batch", "mean", "variance"), rows)


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="configs/betting.yaml")
    ap.add_argument("--out", default="results/betting")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--batches", type=int, default=20)
    args = ap.parse_args()
    code = main(["bet-experiment", "--config", args.config, "--out", args.out, "--jobs", str(args.jobs)])
    if code == 0 and args.batches > 0:
        batches(parse_config(args.config, cls=bench.SpreadBettingConfig), args.batches, args.out)
    raise SystemExit(code)
