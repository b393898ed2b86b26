"""Posterior-belief vs true-parameter value gaps for the inventory problem."""
import argparse

from bcrmdp.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="configs/inventory.yaml")
    ap.add_argument("--out", default="results/inventory")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    raise SystemExit(main(["inventory-experiment", "--config", args.config, "--out", args.out,
                           "--jobs", str(args.jobs)]))
