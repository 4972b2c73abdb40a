"""The 3 scheme x 3 combiner grid plus NoContext, as a table and bar chart.

    python scripts/ingestion_grid.py [--config configs/ablate.yaml] [key=value ...]
"""

import argparse

from ctxslu.experiment import ablate, load_grid


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="configs/ablate.yaml")
    ap.add_argument("overrides", nargs="*")
    args = ap.parse_args()
    grid = load_grid(args.config, args.overrides)
    rows = ablate(grid)
    print(f"{'config':<28}{'WER':>8}{'ICER':>8}{'SemER':>8}{'WERR':>9}{'ICERR':>9}{'SemERR':>9}")
    for r in rows:
        cells = [f"{r[c]:8.4f}" if c in r else f"{'-':>8}" for c in ("WER", "ICER", "SemER")]
        cells += [f"{r[c]:+9.1%}" if r.get(c) is not None else f"{'-':>9}" for c in ("WERR", "ICERR", "SemERR")]
        print(f"{r['config']:<28}" + "".join(cells))
    print(f"table: {grid.out_dir}/table.csv  chart: {grid.out_dir}/rates.png")


if __name__ == "__main__":
    main()
