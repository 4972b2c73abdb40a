"""AttC vs GAttC on a corpus with misleading context.

    python scripts/gating.py [--config configs/gating.yaml] [key=value ...]

Prints the mean gate value per turn kind for every GAttC run and the
per-seed SemER of both combiners.
"""

import argparse
import csv
import json
from pathlib import Path

import numpy as np

from ctxslu.experiment import ablate, load_grid, safe_dirname


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="configs/gating.yaml")
    ap.add_argument("overrides", nargs="*")
    args = ap.parse_args()
    grid = load_grid(args.config, args.overrides)
    ablate(grid)
    out = Path(grid.out_dir)
    with open(out / "per_seed.csv", newline="") as fh:
        per_seed = list(csv.DictReader(fh))
    for r in per_seed:
        print(f"{r['config']:<28} seed {r['seed']}  SemER {float(r['SemER']):.4f}")
    for gates in sorted(out.glob("cells/*GAttC*/seed*/eval/gates.jsonl")):
        rows = [json.loads(line) for line in gates.read_text().splitlines()]
        for key in ("beta_enc", "beta_nlu"):
            by_kind = {}
            for g in rows:
                if g[key] is not None and g["turn"] > 1:
                    by_kind.setdefault(g["kind"], []).append(g[key])
            if by_kind:
                means = ", ".join(f"{k} {np.mean(v):.3f}" for k, v in sorted(by_kind.items()))
                print(f"{gates.parent.parent.parent.name}/{gates.parent.parent.name} {key}: {means}")


if __name__ == "__main__":
    main()
