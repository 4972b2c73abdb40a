"""NoContext vs GAttC SpeechEncoder over three seeds.

    python scripts/context_benefit.py [--config configs/context_benefit.yaml] [key=value ...]

Prints per-seed and median relative SemER/ICER reductions; the full tables
land in the grid's out_dir.
"""

import argparse
import csv

import numpy as np

from ctxslu.experiment import ablate, load_grid


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="configs/context_benefit.yaml")
    ap.add_argument("overrides", nargs="*")
    args = ap.parse_args()
    grid = load_grid(args.config, args.overrides)
    ablate(grid)
    with open(f"{grid.out_dir}/per_seed.csv", newline="") as fh:
        rows = [r for r in csv.DictReader(fh) if r["config"] != grid.baseline]
    for col in ("SemERR", "ICERR", "WERR"):
        vals = [float(r[col]) for r in rows if r.get(col)]
        print(f"{col}: " + ", ".join(f"{v:+.1%}" for v in vals) + f"  median {np.median(vals):+.1%}")


if __name__ == "__main__":
    main()
