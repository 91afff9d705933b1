"""Repeated evaluation protocols and the ablation grid."""

from __future__ import annotations

import itertools
import logging
from dataclasses import replace

import numpy as np

from . import evaluate as ev
from .cluster import run_clustering, sign_value
from .graph import AttributedGraph, make_link_split, normalize_adjacency, sample_classification_split
from .model import ModelParams, encode
from .training import TrainConfig, rng_streams, train

log = logging.getLogger(__name__)

CLASSIFICATION_REPEATS = 20
LINK_REPEATS = 10
CLUSTERING_REPEATS = 10


def _run_rng(seed: int, run: int) -> np.random.Generator:
    return np.random.default_rng([seed, run])


def classification_protocol(
    graph: AttributedGraph,
    params: ModelParams,
    repeats: int = CLASSIFICATION_REPEATS,
    seed: int = 0,
    mode: str = "imbalanced",
) -> ev.EvalMetrics:
    """Fixed embeddings, a fresh random split and classifier per run."""
    emb = ev.embeddings(params, graph)
    metrics = ev.EvalMetrics("classification")
    for run in range(repeats):
        rng = _run_rng(seed, run)
        split = sample_classification_split(graph, mode, rng)
        metrics.add(accuracy=ev.classify_nodes(emb, split, graph.labels, rng,
                                               num_classes=graph.num_classes))
    return metrics


def link_protocol(
    graph: AttributedGraph, config: TrainConfig, repeats: int = LINK_REPEATS
) -> ev.EvalMetrics:
    """Each run: new edge split, model retrained on the remaining edges."""
    metrics = ev.EvalMetrics("link")
    for run in range(repeats):
        run_seed = config.seed + run
        split = make_link_split(graph, rng_streams(run_seed)["split"])
        res = train(split.train_graph, replace(config, seed=run_seed))
        emb = ev.embeddings(res.params, split.train_graph)
        pos = ev.link_scores(emb, split.test_pos)
        neg = ev.link_scores(emb, split.test_neg)
        metrics.add(auc=ev.auc(pos, neg), ap=ev.average_precision(pos, neg))
        log.info("link run %d: auc %.4f", run, metrics.runs["auc"][-1])
    return metrics


def clustering_protocol(
    graph: AttributedGraph,
    config: TrainConfig | None = None,
    params: ModelParams | None = None,
    repeats: int = CLUSTERING_REPEATS,
    seed: int = 0,
) -> ev.EvalMetrics:
    """K-means with K = #classes on the embeddings.

    With ``config`` each run trains a model on seed ``config.seed + run``;
    with ``params`` the embeddings are fixed and only K-means is re-seeded.
    """
    if (config is None) == (params is None):
        raise ValueError("pass exactly one of config or params")
    metrics = ev.EvalMetrics("clustering")
    for run in range(repeats):
        if config is not None:
            run_params = train(graph, replace(config, seed=config.seed + run)).params
            rng = _run_rng(config.seed, run)
        else:
            run_params = params
            rng = _run_rng(seed, run)
        emb = ev.embeddings(run_params, graph)
        pred = ev.kmeans_cluster(emb, graph.num_classes, rng)
        metrics.add(**ev.clustering_metrics(pred, graph.labels))
    return metrics


# ---------------------------------------------------------------------------
# ablation


def ablation_grid(num_classes: int) -> list[dict]:
    return [
        {"alpha": a, "beta": b, "num_clusters": k}
        for a, b, k in itertools.product(
            (0.0, 0.25, 0.5, 0.75, 1.0), (10.0, 100.0), (num_classes, 32, 128)
        )
    ]


def ablation(graph: AttributedGraph, base: TrainConfig, grid: list[dict]):
    """Train every cell; yield (row dict, embeddings, cluster centroids or None)."""
    for i, overrides in enumerate(grid):
        cfg = replace(base, **overrides)
        res = train(graph, cfg)
        raw = encode(res.params, normalize_adjacency(graph), graph.features)
        emb = ev.embeddings(res.params, graph)
        pred = ev.kmeans_cluster(emb, graph.num_classes, _run_rng(cfg.seed, i))
        row = {
            "cell": i,
            "alpha": cfg.alpha,
            "beta": cfg.beta,
            "num_clusters": cfg.num_clusters,
            "cluster_params_inert": cfg.reduces_to_dgi,
            "silhouette": ev.silhouette(emb, graph.labels),
            **ev.clustering_metrics(pred, graph.labels),
            "best_epoch": res.best_epoch,
            "best_loss": res.best_loss,
        }
        centroids = None
        if not cfg.reduces_to_dgi:
            state = run_clustering(raw, cfg.num_clusters, cfg.beta,
                                   rng_streams(cfg.seed)["cluster"], sign_value(cfg.assign_sign))
            centroids = state.centroids
        log.info("ablation cell %d %s sil=%.4f", i, overrides, row["silhouette"])
        yield row, emb, centroids
