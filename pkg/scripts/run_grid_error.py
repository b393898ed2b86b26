"""Grid projection error against its worst-case bound, per (eps, m_max) cell."""
import argparse

from bcrmdp.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="configs/grid_error.yaml")
    ap.add_argument("--out", default="results/grid_error")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    raise SystemExit(main(["grid-error", "--config", args.config, "--out", args.out, "--jobs", str(args.jobs)]))
