"""Posterior variance plus squared bias along streamed Poisson data."""
import argparse
import os

import numpy as np

from bcrmdp.bench import posterior_error_path, write_csv

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--theta", type=float, default=10.0)
    ap.add_argument("--reps", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/consistency")
    args = ap.parse_args()
    ts = (1, 4, 10, 25, 50, 100, 200, 400)
    err = posterior_error_path(args.theta, ts, args.reps, args.seed)
    write_csv(os.path.join(args.out, "consistency.csv"), ("replication", "t", "error"),
              [(r, t, err[r, k]) for r in range(args.reps) for k, t in enumerate(ts)])
    for k, t in enumerate(ts):
        print(f"t={t:<4d} median {np.median(err[:, k]):.4g}  t*median {t * np.median(err[:, k]):.3g}")
