"""Checkpoints, cluster-state dumps and JSON reports."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .cluster import ClusterState
from .kernels import dense_from_csv, dense_to_csv
from .model import ModelParams

CHECKPOINT_FORMAT = "infoclust-checkpoint/1"


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str | Path, params: ModelParams, config: dict) -> Path:
    """Directory with ``checkpoint.json`` plus ``theta.csv``, ``w.csv``, ``slope.csv``."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    envelope = {
        "format": CHECKPOINT_FORMAT,
        "shapes": {"theta": list(params.theta.shape), "w": list(params.w.shape), "slope": [1]},
        "alpha": config.get("alpha"),
        "beta": config.get("beta"),
        "num_clusters": config.get("num_clusters"),
        "seed": config.get("seed"),
        "config": config,
        "blocks": {"theta": "theta.csv", "w": "w.csv", "slope": "slope.csv"},
    }
    (root / "theta.csv").write_text(dense_to_csv(params.theta), encoding="utf-8")
    (root / "w.csv").write_text(dense_to_csv(params.w), encoding="utf-8")
    (root / "slope.csv").write_text(dense_to_csv(np.array([[params.slope]])), encoding="utf-8")
    write_json(root / "checkpoint.json", envelope)
    return root


def load_checkpoint(path: str | Path) -> tuple[ModelParams, dict]:
    root = Path(path)
    meta_path = root / "checkpoint.json"
    if not meta_path.is_file():
        raise CheckpointError(f"{meta_path}: checkpoint not found")
    envelope = json.loads(meta_path.read_text(encoding="utf-8"))
    if envelope.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{meta_path}: unknown format {envelope.get('format')!r}")
    blocks = {name: dense_from_csv((root / fname).read_text(encoding="utf-8"))
              for name, fname in envelope["blocks"].items()}
    for name, shape in envelope["shapes"].items():
        got = list(blocks[name].shape) if name != "slope" else [blocks[name].size]
        if got != shape:
            raise CheckpointError(f"{name} block has shape {got}, envelope says {shape}")
    params = ModelParams(blocks["theta"], float(blocks["slope"].ravel()[0]), blocks["w"])
    return params, envelope["config"]


def save_cluster_state(path: str | Path, state: ClusterState) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    write_json(root / "cluster_state.json", {
        "num_clusters": state.num_clusters,
        "beta": state.beta,
        "sign": state.sign,
        "iterations": state.iterations,
        "blocks": {"centroids": "centroids.csv", "assignments": "assignments.csv"},
    })
    (root / "centroids.csv").write_text(dense_to_csv(state.centroids), encoding="utf-8")
    (root / "assignments.csv").write_text(dense_to_csv(state.assignments), encoding="utf-8")


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_matrix(path: str | Path, a: np.ndarray) -> None:
    Path(path).write_text(dense_to_csv(a), encoding="utf-8")


def read_matrix(path: str | Path) -> np.ndarray:
    return dense_from_csv(Path(path).read_text(encoding="utf-8"))
