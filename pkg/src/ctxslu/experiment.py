"""Run directories: data generation, training, evaluation and ablation grids.

Layout::

    <data dir>/   train.jsonl dev.jsonl test.jsonl labels.json manifest.json config.yaml
    <train dir>/  checkpoint.ckpt model.json train_log.csv config.yaml
    <eval dir>/   report.json hypotheses.jsonl gates.jsonl config.yaml
    <grid dir>/   cells/<cell>/seed<k>/{train,eval}/...  table.csv per_seed.csv *.png grid.yaml
"""

from __future__ import annotations

import dataclasses
import hashlib
import itertools
import json
import traceback
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .config import DataConfig, ExperimentConfig, ModelConfig, TrainConfig, deep_merge, dump_yaml, from_dict, to_dict
from .data import LabelSet, load_dataset, save_dataset
from .errors import ConfigError
from .metrics import MetricsReport, relative_reduction, write_hypotheses, write_table
from .pipeline import SluModel, check_compatible, evaluate, run_training
from .synth import GeneratorConfig, corpus_stats, generate_synthetic_corpus, split_corpus
from .tokenizer import build_vocab

SPLITS = ("train", "dev", "test")


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def generate_dataset(cfg: GeneratorConfig, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dialogues = generate_synthetic_corpus(cfg)
    parts = split_corpus(dialogues, cfg.split, cfg.seed)
    manifest = {"generator": cfg.to_dict(), "splits": {}}
    for name, part in zip(SPLITS, parts):
        path = out / f"{name}.jsonl"
        save_dataset(path, part)
        manifest["splits"][name] = dict(corpus_stats(part), file=path.name, sha256=file_sha256(path))
    manifest["all"] = corpus_stats(dialogues)
    (out / "labels.json").write_text(json.dumps(LabelSet.from_dialogues(dialogues).to_dict(), indent=2))
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    with open(out / "config.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)
    return manifest


def load_split(data_dir, name):
    return load_dataset(Path(data_dir) / f"{name}.jsonl")


def train_run(cfg: ExperimentConfig, out_dir=None, progress=None):
    """Returns (model, TrainResult)."""
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_yaml(cfg, out / "config.yaml")
    data = Path(cfg.data.dir)
    train = load_split(data, "train")
    labels = LabelSet.from_dict(json.loads((data / "labels.json").read_text()))
    counts = Counter(w for d in train for t in d.turns for w in t.tokens)
    vocab = build_vocab(counts, cfg.data.vocab_size)
    model = SluModel(cfg.model, vocab, labels)
    result = run_training(cfg.train, train, model, log_path=out / "train_log.csv", progress=progress)
    model.save(out)
    return model, result


def eval_run(run_dir, data_path, out_dir, matching="set"):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = SluModel.load(run_dir)
    dialogues = load_dataset(data_path)
    check_compatible(model, dialogues)
    res = evaluate(model, dialogues, matching)
    (out / "report.json").write_text(res.report.to_json())
    write_hypotheses(out / "hypotheses.jsonl", res.utterances)
    with open(out / "gates.jsonl", "w", encoding="utf-8") as fh:
        for g in res.gates:
            fh.write(json.dumps(g, sort_keys=True) + "\n")
    with open(out / "config.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump({"run": str(run_dir), "data": str(data_path), "matching": matching}, fh)
    return res


# ----------------------------------------------------------------------------
# ablation grids


@dataclass
class GridConfig:
    """A list of cells, each a partial ``model`` config over a shared base.

    ``grid`` expands a cartesian product, e.g.
    ``{scheme: [SpeechEncoder, ...], combiner: [AvC, AttC, GAttC]}``; a
    ``NoContext`` baseline cell is included unless ``include_baseline`` is off,
    in which case relative reductions are left empty.
    """

    data: dict = field(default_factory=dict)
    gen: dict | None = None  # generator config; when set the corpus is generated into <out>/data
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    cells: list = field(default_factory=list)
    seeds: list = field(default_factory=lambda: [0])
    baseline: str = "NoContext"
    include_baseline: bool = True
    split: str = "test"
    out_dir: str = "runs/ablate"


def load_grid(path=None, overrides=()) -> GridConfig:
    from .config import load_config

    return load_config(GridConfig, path, overrides)


def expand_cells(grid: GridConfig) -> list[tuple[str, dict]]:
    cells = [(grid.baseline, {"scheme": "NoContext", "combiner": None})] if grid.include_baseline else []
    keys = list(grid.grid)
    for values in itertools.product(*(grid.grid[k] for k in keys)) if keys else ():
        cell = dict(zip(keys, values))
        cells.append((cell_name(cell), cell))
    for c in grid.cells:
        c = dict(c)
        name = c.pop("name", None) or cell_name(c)
        cells.append((name, c))
    seen, out = set(), []
    for name, cell in cells:
        if name not in seen:
            seen.add(name)
            out.append((name, cell))
    return out


def cell_name(cell: dict) -> str:
    if cell.get("scheme") == "NoContext":
        return "NoContext"
    parts = [cell.get("scheme", "")]
    if cell.get("context_sources", "both") != "both":
        parts.append({"da": "DA", "utt": "PrevUtt"}[cell["context_sources"]])
    parts.append(str(cell.get("combiner")))
    parts += [f"{k}={v}" for k, v in sorted(cell.items()) if k not in ("scheme", "combiner", "context_sources")]
    return "+".join(p for p in parts if p)


COUNT_COLUMNS = ["utterances", "ref_words", "substitutions", "insertions", "deletions", "intent_errors",
                 "slot_errors", "ref_slots"]
RATE_KEYS = (("WER", "wer"), ("ICER", "icer"), ("SemER", "semer"))


def run_cell(grid: GridConfig, name: str, cell: dict, seed: int, data_dir, out_dir, progress=None) -> MetricsReport:
    model_d = deep_merge(deep_merge(grid.model, cell), {"seed": seed})
    train_d = deep_merge(grid.train, {"seed": seed})
    exp = ExperimentConfig(
        data=from_dict(DataConfig, deep_merge(grid.data, {"dir": str(data_dir)})),
        model=from_dict(ModelConfig, model_d),
        train=from_dict(TrainConfig, train_d),
        out_dir=str(Path(out_dir) / "train"),
    )
    train_run(exp, progress=progress)
    res = eval_run(exp.out_dir, Path(data_dir) / f"{grid.split}.jsonl", Path(out_dir) / "eval")
    return res.report


def ablate(grid: GridConfig, progress=None, log=print) -> list[dict]:
    out = Path(grid.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "grid.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(to_dict(grid), fh, sort_keys=False)
    if grid.gen is not None:
        data_dir = out / "data"
        generate_dataset(GeneratorConfig.from_dict(grid.gen), data_dir)
    elif grid.data.get("dir"):
        data_dir = Path(grid.data["dir"])
    else:
        raise ConfigError("grid needs either gen: or data.dir")
    cells = expand_cells(grid)
    reports: dict[tuple[str, int], MetricsReport | str] = {}
    for name, cell in cells:
        for seed in grid.seeds:
            cell_dir = out / "cells" / safe_dirname(name) / f"seed{seed}"
            log(f"[ablate] {name} seed={seed}")
            try:
                reports[name, seed] = run_cell(grid, name, cell, seed, data_dir, cell_dir, progress)
            except Exception as e:  # a failing cell is recorded, the grid goes on
                reports[name, seed] = f"{type(e).__name__}: {e}"
                (cell_dir).mkdir(parents=True, exist_ok=True)
                (cell_dir / "error.txt").write_text(traceback.format_exc())
    per_seed, rows = summarize(cells, grid.seeds, reports, grid.baseline)
    write_table(out / "per_seed.csv", per_seed, ["seed", "status"] + COUNT_COLUMNS)
    extra = ["status", "seeds"]
    if len(grid.seeds) > 1:
        extra += [f"{c}_{s}" for c in ("WER", "ICER", "SemER", "WERR", "ICERR", "SemERR") for s in ("min", "max")]
    else:
        extra += COUNT_COLUMNS
    write_table(out / "table.csv", rows, extra)
    plot_table(rows, out)
    return rows


def safe_dirname(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_.=" else "_" for c in name)


def summarize(cells, seeds, reports, baseline):
    per_seed = []
    for name, _ in cells:
        for seed in seeds:
            r = reports[name, seed]
            row = {"config": name, "seed": seed}
            if isinstance(r, str):
                row["status"] = "failed: " + r
            else:
                row["status"] = "ok"
                row.update({k: getattr(r, k) for k in COUNT_COLUMNS})
                row.update({col: getattr(r, key) for col, key in RATE_KEYS})
                base = reports.get((baseline, seed))
                if isinstance(base, MetricsReport):
                    for col, key in RATE_KEYS:
                        b = getattr(base, key)
                        row[col + "R"] = relative_reduction(b, getattr(r, key)) if b > 0 else None
            per_seed.append(row)
    rows = []
    for name, _ in cells:
        mine = [r for r in per_seed if r["config"] == name]
        ok = [r for r in mine if r["status"] == "ok"]
        row = {"config": name, "seeds": len(ok)}
        row["status"] = "ok" if len(ok) == len(mine) else "; ".join(r["status"] for r in mine if r["status"] != "ok")
        for col in ("WER", "ICER", "SemER", "WERR", "ICERR", "SemERR"):
            vals = [r[col] for r in ok if r.get(col) is not None]
            if vals:
                row[col] = float(np.mean(vals))
                row[col + "_min"], row[col + "_max"] = float(min(vals)), float(max(vals))
        if len(seeds) == 1 and ok:
            row.update({k: ok[0][k] for k in COUNT_COLUMNS})
        rows.append(row)
    return per_seed, rows


def plot_table(rows, out_dir):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    names = [r["config"] for r in rows]
    fig, axes = plt.subplots(1, 3, figsize=(max(8, 1.1 * len(rows) * 3), 4))
    for ax, col in zip(axes, ("WER", "ICER", "SemER")):
        vals = [r.get(col, np.nan) for r in rows]
        lo = [v - r.get(col + "_min", v) for v, r in zip(vals, rows)]
        hi = [r.get(col + "_max", v) - v for v, r in zip(vals, rows)]
        ax.bar(range(len(rows)), vals, yerr=[lo, hi], color="tab:blue", capsize=3)
        ax.set_xticks(range(len(rows)))
        ax.set_xticklabels(names, rotation=60, ha="right", fontsize=7)
        ax.set_title(col)
    fig.tight_layout()
    fig.savefig(Path(out_dir) / "rates.png", dpi=100)
    plt.close(fig)
    fig, ax = plt.subplots(figsize=(max(6, 0.8 * len(rows)), 4))
    width = 0.27
    for i, col in enumerate(("WERR", "ICERR", "SemERR")):
        vals = [r.get(col, np.nan) or 0.0 for r in rows]
        ax.bar(np.arange(len(rows)) + (i - 1) * width, vals, width, label=col)
    ax.axhline(0, color="black", lw=0.5)
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(names, rotation=60, ha="right", fontsize=7)
    ax.legend()
    fig.tight_layout()
    fig.savefig(Path(out_dir) / "reductions.png", dpi=100)
    plt.close(fig)
