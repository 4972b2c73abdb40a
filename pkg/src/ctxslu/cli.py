"""``ctxslu gen|train|eval|ablate|metrics``.

Every subcommand takes an optional ``--config`` YAML file plus trailing
``key.sub=value`` overrides (CLI > file > defaults) and writes the resolved
config into its output directory.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ExperimentConfig, load_config
from .errors import ConfigError
from .experiment import ablate, eval_run, generate_dataset, load_grid, train_run
from .metrics import MetricsReport, read_hypotheses, score
from .synth import GeneratorConfig


def _gen(args):
    cfg = load_config(GeneratorConfig, args.config, args.overrides)
    if args.seed is not None:
        cfg.seed = args.seed
    manifest = generate_dataset(cfg, args.out)
    print(json.dumps({k: {c: v[c] for c in ("dialogues", "turns")} for k, v in manifest["splits"].items()}))


def _train(args):
    overrides = list(args.overrides)
    if args.out:
        overrides.append(f"out_dir={args.out}")
    if args.data:
        overrides.append(f"data.dir={args.data}")
    if args.seed is not None:
        overrides += [f"model.seed={args.seed}", f"train.seed={args.seed}"]
    cfg = load_config(ExperimentConfig, args.config, overrides)
    _, result = train_run(cfg, progress=args.progress)
    last = result.log[-1] if result.log else {}
    print(json.dumps({"steps": len(result.log), "seconds": round(result.seconds, 1), "last": last}))


def _eval(args):
    out = args.out or str(Path(args.run) / "eval")
    res = eval_run(args.run, args.data, out, args.matching)
    print(json.dumps(res.report.rates()))


def _ablate(args):
    overrides = list(args.overrides)
    if args.out:
        overrides.append(f"out_dir={args.out}")
    grid = load_grid(args.config, overrides)
    rows = ablate(grid, progress=args.progress)
    failed = [r["config"] for r in rows if r["status"] != "ok"]
    print(json.dumps({"cells": len(rows), "failed": failed}))
    return 1 if failed else 0


def _metrics(args):
    report = score(read_hypotheses(args.hyps), args.matching)
    if args.baseline:
        report.compare_to(score(read_hypotheses(args.baseline), args.matching), args.baseline)
    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text)
    print(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ctxslu", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("--config", help="YAML config file")
        sp.add_argument("--out", help=out_help)
        sp.add_argument("--seed", type=int)
        sp.add_argument("overrides", nargs="*", help="key.sub=value overrides")

    g = sub.add_parser("gen", help="generate a synthetic dialogue corpus")
    common(g, "output data directory")
    g.set_defaults(func=_gen, out="runs/data")

    t = sub.add_parser("train", help="three-stage training")
    common(t, "output run directory")
    t.add_argument("--data", help="data directory from `gen`")
    t.add_argument("--progress", type=int, help="print the loss row every N steps")
    t.set_defaults(func=_train)

    e = sub.add_parser("eval", help="decode and score a dataset")
    e.add_argument("--run", required=True, help="run directory from `train`")
    e.add_argument("--data", required=True, help="dataset .jsonl")
    e.add_argument("--out")
    e.add_argument("--matching", choices=("set", "positional"), default="set")
    e.set_defaults(func=_eval)

    a = sub.add_parser("ablate", help="train and evaluate a grid of configurations")
    a.add_argument("--config", required=True)
    a.add_argument("--out")
    a.add_argument("--progress", type=int)
    a.add_argument("overrides", nargs="*")
    a.set_defaults(func=_ablate)

    m = sub.add_parser("metrics", help="score a hypotheses dump")
    m.add_argument("hyps")
    m.add_argument("--baseline", help="hypotheses dump of the baseline system")
    m.add_argument("--matching", choices=("set", "positional"), default="set")
    m.add_argument("--out")
    m.set_defaults(func=_metrics)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.overrides = [o[2:] if o.startswith("--") else o for o in getattr(args, "overrides", [])]
    try:
        return args.func(args) or 0
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
