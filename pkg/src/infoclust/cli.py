"""Command-line entry point: ``infoclust {train,eval,ablate,export}``.

Exit codes: 0 ok, 1 configuration error, 2 data error, 3 numeric failure.
Settings resolve as command-line flags, then ``--config`` JSON, then defaults.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import evaluate as ev
from . import protocols
from .cluster import run_clustering, sign_value
from .graph import GraphDataError, extract_lcc, load_graph, normalize_adjacency
from .kernels import NonFiniteError
from .model import encode, global_summary
from .persist import CheckpointError, load_checkpoint, save_checkpoint, write_json, write_matrix
from .training import TASK_EMBED_DIM, TrainConfig, task_key, expand_grid, selection_grid, rng_streams, select_model, train

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3
TASKS = ("classify", "link", "cluster")

log = logging.getLogger("infoclust")


class ConfigError(ValueError):
    pass


# flag name -> TrainConfig field
TRAIN_FLAGS = {
    "alpha": "alpha",
    "beta": "beta",
    "clusters": "num_clusters",
    "dim": "embed_dim",
    "seed": "seed",
    "lr": "learning_rate",
    "max_epochs": "max_epochs",
    "patience": "patience",
    "assign_sign": "assign_sign",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="infoclust", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False):
        p.add_argument("--config", type=Path, help="JSON run configuration")
        p.add_argument("--dataset", type=Path)
        p.add_argument("--task", choices=TASKS)
        p.add_argument("--out", type=Path)
        p.add_argument("--lcc", action="store_true", default=None,
                       help="restrict to the largest connected component")
        if checkpoint:
            p.add_argument("--checkpoint", type=Path, required=True)

    def train_flags(p):
        p.add_argument("--alpha", type=float)
        p.add_argument("--beta", type=float)
        p.add_argument("--clusters", type=int)
        p.add_argument("--dim", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--max-epochs", type=int)
        p.add_argument("--patience", type=int)
        p.add_argument("--assign-sign", choices=("plus", "minus"))

    p = sub.add_parser("train", help="train a model (optionally with grid selection)")
    common(p)
    train_flags(p)
    p.add_argument("--grid", help="JSON grid ('standard' for the 12-triplet grid) or path to one")

    p = sub.add_parser("eval", help="run a task protocol with a trained checkpoint")
    common(p, checkpoint=True)
    p.add_argument("--repeats", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("ablate", help="train over an (alpha, beta, K) grid and score each cell")
    common(p)
    train_flags(p)
    p.add_argument("--grid", help="JSON grid or path; default is the full 30-cell grid")

    p = sub.add_parser("export", help="write row-normalised embeddings (and cluster summaries)")
    common(p, checkpoint=True)
    p.add_argument("--clusters", action="store_true", help="also write centroids and the graph summary")
    return parser


# ---------------------------------------------------------------------------
# configuration


def resolve(args) -> dict:
    """Merge flags over the config file; returns a RunConfig-like dict."""
    cfg = {}
    if getattr(args, "config", None):
        try:
            cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    run = {
        "dataset": args.dataset or cfg.get("dataset"),
        "task": args.task or cfg.get("task"),
        "out": args.out or cfg.get("out") or Path("out"),
        "repeats": getattr(args, "repeats", None) or cfg.get("repeats"),
        "lcc": args.lcc if args.lcc is not None else bool(cfg.get("lcc", False)),
        "train": dict(cfg.get("train", {})),
    }
    for flag, name in TRAIN_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            run["train"][name] = value
    if run["dataset"] is None:
        raise ConfigError("--dataset is required")
    if run["repeats"] is not None and run["repeats"] < 1:
        raise ConfigError("--repeats must be >= 1")
    run["dataset"] = Path(run["dataset"])
    run["out"] = Path(run["out"])
    return run


def train_config(run: dict, task: str | None) -> TrainConfig:
    known = {f.name for f in fields(TrainConfig)}
    unknown = set(run["train"]) - known
    if unknown:
        raise ConfigError(f"unknown training settings: {sorted(unknown)}")
    settings = dict(run["train"])
    if "embed_dim" not in settings and task:
        settings["embed_dim"] = TASK_EMBED_DIM[task_key(task)]
    try:
        return TrainConfig(**settings)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def parse_grid(text: str | None, default):
    if text is None:
        return default
    if text == "standard":
        return selection_grid()
    path = Path(text)
    try:
        spec = json.loads(path.read_text(encoding="utf-8") if path.is_file() else text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid --grid JSON: {exc}") from None
    # accept the flag spelling "clusters" as well as the field name
    rename = lambda d: {("num_clusters" if k == "clusters" else k): v for k, v in d.items()}
    spec = rename(spec) if isinstance(spec, dict) else [rename(e) for e in spec]
    return expand_grid(spec)


def load_dataset(run: dict):
    graph = load_graph(run["dataset"])
    if run["lcc"]:
        graph, _ = extract_lcc(graph)
    return graph


def _stable_report(command: str, run: dict, body: dict) -> dict:
    return {
        "command": command,
        "dataset": str(run["dataset"]),
        "lcc": run["lcc"],
        **body,
    }


def _write_report(path: Path, stable: dict, started: float) -> None:
    write_json(path, {"stable": stable, "volatile": {
        "wall_time_sec": time.perf_counter() - started,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }})


# ---------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    started = time.perf_counter()
    run = resolve(args)
    task = run["task"] or "classify"
    cfg = train_config(run, task)
    grid = parse_grid(args.grid, None)
    graph = load_dataset(run)
    out = run["out"]
    out.mkdir(parents=True, exist_ok=True)

    selection = None
    if grid is not None:
        sel = select_model(graph, task, grid, seed=cfg.seed, base=cfg)
        cfg, result = sel.config, sel.result
        selection = {"task": task_key(task), "chosen": cfg.to_dict(), "records": sel.records}
        write_json(out / "selection.json", selection)
    else:
        result = train(graph, cfg)

    save_checkpoint(out / "checkpoint", result.params, cfg.to_dict())
    stable = _stable_report("train", run, result.report()["stable"])
    stable["task"] = task_key(task)
    if cfg.reduces_to_dgi:
        stable["note"] = "reduces to DGI"
    if selection is not None:
        stable["selection"] = selection
    _write_report(out / "train_report.json", stable, started)
    print(f"best epoch {result.best_epoch} loss {result.best_loss:.6f}; wrote {out}")
    return 0


def _check_shapes(params, graph) -> None:
    if params.num_features != graph.num_features:
        raise CheckpointError(
            f"checkpoint theta has shape {tuple(params.theta.shape)} but dataset features have "
            f"shape {tuple(graph.features.shape)}"
        )


def cmd_eval(args) -> int:
    started = time.perf_counter()
    run = resolve(args)
    task = run["task"]
    if task is None:
        raise ConfigError("--task is required for eval")
    params, saved_cfg = load_checkpoint(args.checkpoint)
    graph = load_dataset(run)
    _check_shapes(params, graph)
    seed = saved_cfg.get("seed", 0) if args.seed is None else args.seed
    if task == "classify":
        metrics = protocols.classification_protocol(
            graph, params, run["repeats"] or protocols.CLASSIFICATION_REPEATS, seed)
    elif task == "link":
        # held-out edges must be hidden from training, so each run retrains
        cfg = replace(TrainConfig(**saved_cfg), seed=seed)
        metrics = protocols.link_protocol(graph, cfg, run["repeats"] or protocols.LINK_REPEATS)
    else:
        metrics = protocols.clustering_protocol(
            graph, params=params, repeats=run["repeats"] or protocols.CLUSTERING_REPEATS, seed=seed)
    out = run["out"]
    out.mkdir(parents=True, exist_ok=True)
    stable = _stable_report("eval", run, metrics.to_json(saved_cfg))
    _write_report(out / f"metrics_{metrics.task}.json", stable, started)
    _write_table(out / f"metrics_{metrics.task}.csv", metrics)
    for name, s in metrics.summary().items():
        print(f"{name}: {100 * s['mean']:.1f} +- {100 * s['std']:.1f}")
    return 0


def _write_table(path: Path, metrics: ev.EvalMetrics) -> None:
    summary = metrics.summary()
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["task", *summary])
        w.writerow([metrics.task, *(f"{100 * s['mean']:.1f} ± {100 * s['std']:.1f}"
                                    for s in summary.values())])


def cmd_ablate(args) -> int:
    started = time.perf_counter()
    run = resolve(args)
    cfg = train_config(run, run["task"] or "classify")
    graph = load_dataset(run)
    if graph.labels is None:
        raise GraphDataError(f"{run['dataset']}: ablation needs labels.csv")
    grid = parse_grid(args.grid, protocols.ablation_grid(graph.num_classes))
    out = run["out"]
    emb_dir = out / "embeddings"
    emb_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for row, emb, centroids in protocols.ablation(graph, cfg, grid):
        rows.append(row)
        write_matrix(emb_dir / f"cell{row['cell']:02d}_embeddings.csv", emb)
        if centroids is not None:
            write_matrix(emb_dir / f"cell{row['cell']:02d}_centroids.csv", centroids)
    with (out / "ablation.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    stable = _stable_report("ablate", run, {"base_config": cfg.to_dict(), "cells": rows,
                                            "trend_checks": _trend_checks(rows)})
    _write_report(out / "ablation.json", stable, started)
    print(f"{len(rows)} cells written to {out / 'ablation.csv'}")
    return 0


def _trend_checks(rows: list[dict]) -> dict:
    """Reported, not enforced: does silhouette grow with K for fixed (alpha, beta)?"""
    groups: dict[tuple, list] = {}
    for r in rows:
        groups.setdefault((r["alpha"], r["beta"]), []).append((r["num_clusters"], r["silhouette"]))
    checks = {}
    for (a, b), cells in groups.items():
        sil = [s for _, s in sorted(cells)]
        checks[f"alpha={a},beta={b}"] = {
            "silhouette_monotone_in_K": bool(all(x <= y for x, y in zip(sil, sil[1:])))
        }
    return checks


def cmd_export(args) -> int:
    run = resolve(args)
    params, saved_cfg = load_checkpoint(args.checkpoint)
    graph = load_dataset(run)
    _check_shapes(params, graph)
    out = run["out"]
    out.mkdir(parents=True, exist_ok=True)
    raw = encode(params, normalize_adjacency(graph), graph.features)
    write_matrix(out / "embeddings.csv", ev.embeddings(params, graph))
    if args.clusters:
        cfg = TrainConfig(**saved_cfg)
        state = run_clustering(raw, cfg.num_clusters, cfg.beta,
                               rng_streams(cfg.seed)["cluster"], sign_value(cfg.assign_sign))
        write_matrix(out / "centroids.csv", state.centroids)
        write_matrix(out / "summary.csv", global_summary(raw)[None, :])
    print(f"wrote embeddings for {graph.num_nodes} nodes to {out}")
    return 0


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "ablate": cmd_ablate, "export": cmd_export}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except (GraphDataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NonFiniteError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, CheckpointError, ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
