"""Downstream evaluation of embeddings: classification, link prediction, clustering."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from scipy.special import comb
from scipy.stats import rankdata

from . import model as M
from .graph import AttributedGraph, ClassificationSplit, normalize_adjacency, sample_classification_split
from .kernels import row_l2_normalize, sigmoid
from .training import AdamState, adam_update


def embeddings(params: M.ModelParams, graph: AttributedGraph) -> np.ndarray:
    """Row-normalised embeddings of ``graph``, ready for downstream tasks."""
    return row_l2_normalize(M.encode(params, normalize_adjacency(graph), graph.features))


def classification_split_for(graph, mode, rng) -> ClassificationSplit:
    return sample_classification_split(graph, mode, rng)


# ---------------------------------------------------------------------------
# node classification


@dataclass
class LogRegParams:
    weight: np.ndarray  # C x F'
    bias: np.ndarray    # C

    def predict(self, h: np.ndarray) -> np.ndarray:
        return np.argmax(h @ self.weight.T + self.bias, axis=1)


def fit_logreg(
    h: np.ndarray,
    y: np.ndarray,
    num_classes: int,
    rng: np.random.Generator,
    lr: float = 0.01,
    epochs: int = 1000,
) -> LogRegParams:
    """Unregularised softmax regression, full-batch Adam, Glorot init."""
    d = h.shape[1]
    limit = np.sqrt(6.0 / (d + num_classes))
    params = {"weight": rng.uniform(-limit, limit, size=(num_classes, d)),
              "bias": np.zeros(num_classes)}
    onehot = np.eye(num_classes)[y]
    state = AdamState()
    n = h.shape[0]
    for _ in range(epochs):
        logits = h @ params["weight"].T + params["bias"]
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        dlogits = (p - onehot) / n
        adam_update(params, {"weight": dlogits.T @ h, "bias": dlogits.sum(axis=0)}, state, lr)
    return LogRegParams(params["weight"], params["bias"])


def classify_nodes(
    h: np.ndarray,
    split: ClassificationSplit,
    labels: np.ndarray,
    rng: np.random.Generator,
    eval_ids: np.ndarray | None = None,
    num_classes: int | None = None,
) -> float:
    """Train on ``split.train``; accuracy on ``eval_ids`` (default: test set)."""
    num_classes = int(labels.max()) + 1 if num_classes is None else num_classes
    y_train = labels[split.train]
    missing = set(range(num_classes)) - set(np.unique(y_train).tolist())
    if missing:
        raise ValueError(f"classes {sorted(missing)} absent from the training set")
    clf = fit_logreg(h[split.train], y_train, num_classes, rng)
    ids = split.test if eval_ids is None else eval_ids
    return float(np.mean(clf.predict(h[ids]) == labels[ids]))


# ---------------------------------------------------------------------------
# link prediction


def link_scores(h: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.size and (pairs.min() < 0 or pairs.max() >= h.shape[0]):
        raise IndexError("pair index out of range")
    return sigmoid(np.einsum("ij,ij->i", h[pairs[:, 0]], h[pairs[:, 1]]))


def auc(pos: np.ndarray, neg: np.ndarray) -> float:
    """P(pos > neg) with ties counted one half (Mann-Whitney form)."""
    pos, neg = np.asarray(pos, float), np.asarray(neg, float)
    if pos.size == 0 or neg.size == 0:
        raise ValueError("auc needs at least one positive and one negative score")
    ranks = rankdata(np.concatenate([pos, neg]))
    u = ranks[:pos.size].sum() - pos.size * (pos.size + 1) / 2.0
    return float(u / (pos.size * neg.size))


def average_precision(pos: np.ndarray, neg: np.ndarray) -> float:
    """Step-interpolated area under the precision/recall curve.

    Ranking is by descending score; among equal scores negatives come first.
    """
    pos, neg = np.asarray(pos, float), np.asarray(neg, float)
    if pos.size == 0:
        raise ValueError("average precision needs at least one positive")
    scores = np.concatenate([pos, neg])
    is_pos = np.concatenate([np.ones(pos.size), np.zeros(neg.size)])
    order = np.lexsort((is_pos, -scores))
    hits = is_pos[order]
    precision = np.cumsum(hits) / np.arange(1, hits.size + 1)
    return float(np.sum(precision[hits == 1]) / pos.size)


# ---------------------------------------------------------------------------
# clustering


def _lloyd(h, centers, max_iter):
    assign = None
    for _ in range(max_iter):
        d2 = (np.einsum("ij,ij->i", h, h)[:, None] - 2.0 * h @ centers.T
              + np.einsum("ij,ij->i", centers, centers)[None, :])
        new = np.argmin(d2, axis=1)
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        for k in range(centers.shape[0]):
            members = assign == k
            if members.any():
                centers[k] = h[members].mean(axis=0)
    sse = float(np.sum((h - centers[assign]) ** 2))
    return assign, sse


def kmeans_cluster(
    h: np.ndarray, k: int, rng: np.random.Generator, restarts: int = 10, max_iter: int = 300
) -> np.ndarray:
    """Hard Lloyd's K-means; best of ``restarts`` random-node initialisations."""
    n = h.shape[0]
    if k > n:
        raise ValueError(f"k={k} exceeds {n} points")
    best, best_sse = None, np.inf
    for _ in range(restarts):
        centers = h[rng.choice(n, size=k, replace=False)].copy()
        assign, sse = _lloyd(h, centers, max_iter)
        if sse < best_sse:
            best, best_sse = assign, sse
    return best


def contingency(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def clustering_accuracy(pred, truth) -> float:
    table = contingency(pred, truth)
    rows, cols = linear_sum_assignment(-table)
    return float(table[rows, cols].sum() / len(truth))


def nmi(a, b) -> float:
    """Mutual information over the arithmetic mean of the two entropies."""
    table = contingency(a, b)
    n = table.sum()
    ha, hb = _entropy(table.sum(axis=1)), _entropy(table.sum(axis=0))
    if ha == 0.0 and hb == 0.0:
        return 1.0
    nz = table > 0
    pij = table[nz] / n
    outer = np.outer(table.sum(axis=1), table.sum(axis=0))[nz] / (n * n)
    mi = float(np.sum(pij * np.log(pij / outer)))
    return max(mi / ((ha + hb) / 2.0), 0.0)


def ari(a, b) -> float:
    table = contingency(a, b)
    n = table.sum()
    index = comb(table, 2).sum()
    sum_a = comb(table.sum(axis=1), 2).sum()
    sum_b = comb(table.sum(axis=0), 2).sum()
    total = comb(n, 2)
    expected = sum_a * sum_b / total if total else 0.0
    max_index = (sum_a + sum_b) / 2.0
    if max_index == expected:
        return 1.0
    return float((index - expected) / (max_index - expected))


def clustering_metrics(pred, truth) -> dict[str, float]:
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch {pred.shape} vs {truth.shape}")
    return {"acc": clustering_accuracy(pred, truth), "nmi": nmi(pred, truth), "ari": ari(pred, truth)}


def silhouette(h: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette coefficient (Euclidean); singleton clusters score 0."""
    labels = np.asarray(labels)
    classes, inv = np.unique(labels, return_inverse=True)
    if classes.size < 2:
        raise ValueError("silhouette needs at least two labels")
    dist = cdist(h, h)
    onehot = np.eye(classes.size)[inv]
    sums = dist @ onehot                  # N x C: total distance to each class
    sizes = onehot.sum(axis=0)
    own = sizes[inv]
    a = np.where(own > 1, sums[np.arange(len(h)), inv] / np.maximum(own - 1, 1), 0.0)
    other = sums / sizes[None, :]
    other[np.arange(len(h)), inv] = np.inf
    b = other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(s.mean())


# ---------------------------------------------------------------------------
# reports


@dataclass
class EvalMetrics:
    task: str
    runs: dict[str, list[float]] = field(default_factory=dict)

    def add(self, **values: float) -> None:
        for k, v in values.items():
            self.runs.setdefault(k, []).append(float(v))

    def summary(self) -> dict[str, dict[str, float]]:
        return {k: {"mean": float(np.mean(v)), "std": float(np.std(v))} for k, v in self.runs.items()}

    def to_json(self, config: dict | None = None) -> dict:
        return {"task": self.task, "config": config or {}, "per_run": self.runs,
                "summary": self.summary()}
