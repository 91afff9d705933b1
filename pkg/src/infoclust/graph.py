"""Attributed graphs: loading, LCC extraction, normalization, splits, corruption."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components


class GraphDataError(ValueError):
    """Malformed or missing dataset files."""


@dataclass(frozen=True)
class AttributedGraph:
    """Undirected graph with node features and optional class labels.

    ``adj`` is a binary, symmetric CSR matrix with sorted column indices and
    no stored diagonal.
    """

    adj: sp.csr_matrix
    features: np.ndarray
    labels: np.ndarray | None = None
    num_classes: int = 0

    @property
    def num_nodes(self) -> int:
        return self.adj.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        """Undirected edge count."""
        return self.adj.nnz // 2

    def edge_list(self) -> np.ndarray:
        """Undirected edges as an (E, 2) array with ``i < j``, sorted."""
        coo = sp.triu(self.adj, k=1).tocoo()
        edges = np.stack([coo.row, coo.col], axis=1).astype(np.int64)
        order = np.lexsort((edges[:, 1], edges[:, 0]))
        return edges[order]

    def validate(self) -> None:
        adj = self.adj
        n = adj.shape[0]
        if adj.shape != (n, n):
            raise GraphDataError(f"adjacency must be square, got {adj.shape}")
        if not adj.has_sorted_indices:
            raise GraphDataError("adjacency column indices not sorted")
        if adj.nnz and (adj.indices.min() < 0 or adj.indices.max() >= n):
            raise GraphDataError("adjacency index out of range")
        if np.any(adj.diagonal() != 0):
            raise GraphDataError("adjacency stores self-loops")
        if (adj != adj.T).nnz != 0:
            raise GraphDataError("adjacency is not symmetric")
        if self.features.shape[0] != n:
            raise GraphDataError(
                f"features have {self.features.shape[0]} rows, expected {n}"
            )
        if self.labels is not None:
            if self.labels.shape != (n,):
                raise GraphDataError(f"labels length {self.labels.shape}, expected {n}")
            if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
                raise GraphDataError("label outside [0, num_classes)")


def adjacency_from_edges(edges: np.ndarray, num_nodes: int) -> sp.csr_matrix:
    """Symmetric, deduplicated, loop-free binary CSR from an (E, 2) edge array."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    edges = edges[edges[:, 0] != edges[:, 1]]
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    adj = sp.csr_matrix(
        (np.ones(rows.size), (rows, cols)), shape=(num_nodes, num_nodes)
    )
    adj.sum_duplicates()
    adj.data[:] = 1.0
    adj.sort_indices()
    return adj


def make_graph(
    edges: np.ndarray,
    features: np.ndarray,
    labels: np.ndarray | None = None,
    num_classes: int | None = None,
) -> AttributedGraph:
    features = np.ascontiguousarray(features, dtype=np.float64)
    n = features.shape[0]
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        if num_classes is None:
            num_classes = int(labels.max()) + 1 if labels.size else 0
    g = AttributedGraph(
        adj=adjacency_from_edges(edges, n),
        features=features,
        labels=labels,
        num_classes=num_classes or 0,
    )
    g.validate()
    return g


# ---------------------------------------------------------------------------
# on-disk format


def _read_lines(path: Path) -> list[str]:
    if not path.is_file():
        raise GraphDataError(f"{path}: file not found")
    with path.open(encoding="utf-8") as fh:
        return fh.read().splitlines()


def _parse_edges(path: Path, n: int) -> np.ndarray:
    edges = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise GraphDataError(f"{path}:{lineno}: expected 'src,dst', got {line!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphDataError(f"{path}:{lineno}: non-integer node id in {line!r}") from None
        if not (0 <= u < n and 0 <= v < n):
            raise GraphDataError(f"{path}:{lineno}: node index out of range [0, {n}) in {line!r}")
        edges.append((u, v))
    return np.array(edges, dtype=np.int64).reshape(-1, 2)


def _parse_features(path: Path, n: int, f: int) -> np.ndarray:
    lines = [ln for ln in _read_lines(path)]
    while lines and not lines[-1].strip():
        lines.pop()
    if len(lines) != n:
        raise GraphDataError(f"{path}: {len(lines)} rows, meta.json says num_nodes={n}")
    out = np.empty((n, f), dtype=np.float64)
    for lineno, line in enumerate(lines, start=1):
        parts = line.split(",")
        if len(parts) != f:
            raise GraphDataError(
                f"{path}:{lineno}: {len(parts)} columns, meta.json says num_features={f}"
            )
        try:
            out[lineno - 1] = np.array(parts, dtype=np.float64)
        except ValueError:
            bad = next(p for p in parts if not _is_float(p))
            raise GraphDataError(f"{path}:{lineno}: non-numeric feature {bad!r}") from None
    if not np.all(np.isfinite(out)):
        row = int(np.argwhere(~np.isfinite(out))[0, 0])
        raise GraphDataError(f"{path}:{row + 1}: non-finite feature value")
    return out


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _parse_labels(path: Path, n: int, c: int) -> np.ndarray:
    lines = [ln.strip() for ln in _read_lines(path)]
    while lines and not lines[-1]:
        lines.pop()
    if len(lines) != n:
        raise GraphDataError(f"{path}: {len(lines)} rows, meta.json says num_nodes={n}")
    labels = np.empty(n, dtype=np.int64)
    for lineno, line in enumerate(lines, start=1):
        try:
            labels[lineno - 1] = int(line)
        except ValueError:
            raise GraphDataError(f"{path}:{lineno}: non-integer label {line!r}") from None
        if not 0 <= labels[lineno - 1] < c:
            raise GraphDataError(f"{path}:{lineno}: label {line} outside [0, {c})")
    return labels


def load_graph(dataset_dir: str | Path) -> AttributedGraph:
    """Read a dataset directory (meta.json, edges.csv, features.csv, labels.csv)."""
    root = Path(dataset_dir)
    if not root.is_dir():
        raise GraphDataError(f"{root}: dataset directory not found")
    meta_path = root / "meta.json"
    text = "\n".join(_read_lines(meta_path))
    try:
        meta = json.loads(text)
        n = int(meta["num_nodes"])
        f = int(meta["num_features"])
        c = int(meta.get("num_classes", 0))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise GraphDataError(f"{meta_path}: invalid header ({exc})") from None

    edges = _parse_edges(root / "edges.csv", n)
    features = _parse_features(root / "features.csv", n, f)
    labels = None
    if (root / "labels.csv").exists():
        labels = _parse_labels(root / "labels.csv", n, c)
    g = AttributedGraph(
        adj=adjacency_from_edges(edges, n),
        features=features,
        labels=labels,
        num_classes=c if labels is not None else 0,
    )
    g.validate()
    return g


def save_graph(g: AttributedGraph, dataset_dir: str | Path) -> None:
    root = Path(dataset_dir)
    root.mkdir(parents=True, exist_ok=True)
    meta = {
        "num_nodes": g.num_nodes,
        "num_features": g.num_features,
        "num_classes": g.num_classes,
    }
    (root / "meta.json").write_text(json.dumps(meta) + "\n", encoding="utf-8")
    with (root / "edges.csv").open("w", encoding="utf-8") as fh:
        for u, v in g.edge_list():
            fh.write(f"{u},{v}\n")
    with (root / "features.csv").open("w", encoding="utf-8") as fh:
        for row in g.features:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    if g.labels is not None:
        with (root / "labels.csv").open("w", encoding="utf-8") as fh:
            fh.writelines(f"{int(y)}\n" for y in g.labels)


# ---------------------------------------------------------------------------
# structure


def induced_subgraph(g: AttributedGraph, nodes: np.ndarray) -> AttributedGraph:
    nodes = np.asarray(nodes, dtype=np.int64)
    adj = g.adj[nodes][:, nodes].tocsr()
    adj.sort_indices()
    return AttributedGraph(
        adj=adj,
        features=g.features[nodes],
        labels=None if g.labels is None else g.labels[nodes],
        num_classes=g.num_classes,
    )


def extract_lcc(g: AttributedGraph) -> tuple[AttributedGraph, np.ndarray]:
    """Largest connected component, renumbered; returns (subgraph, old ids).

    ``old_ids[new] = old``. Ties on size go to the component holding the
    smallest node id.
    """
    if g.num_nodes == 0:
        return g, np.zeros(0, dtype=np.int64)
    _, comp = connected_components(g.adj, directed=False)
    sizes = np.bincount(comp)
    best = sizes.max()
    # components are labelled in order of their smallest node, so the first
    # maximal label is the tie-break winner
    winner = int(np.flatnonzero(sizes == best)[0])
    nodes = np.flatnonzero(comp == winner)
    return induced_subgraph(g, nodes), nodes


def normalize_adjacency(g: AttributedGraph) -> sp.csr_matrix:
    """D^-1/2 (A + I) D^-1/2 with degrees of the self-looped graph."""
    n = g.num_nodes
    a_hat = (g.adj + sp.identity(n, format="csr")).tocsr()
    a_hat.sort_indices()
    deg = np.diff(a_hat.indptr).astype(np.float64)
    rows = np.repeat(np.arange(n), np.diff(a_hat.indptr))
    # integer-valued degree product commutes exactly, so (i,j) and (j,i) agree bitwise
    values = 1.0 / np.sqrt(deg[rows] * deg[a_hat.indices])
    out = sp.csr_matrix((values, a_hat.indices.copy(), a_hat.indptr.copy()), shape=(n, n))
    return out


def corrupt(g: AttributedGraph, rng: np.random.Generator) -> AttributedGraph:
    """Row-shuffle the features; the adjacency object is shared."""
    perm = rng.permutation(g.num_nodes)
    return replace(g, features=g.features[perm])


# ---------------------------------------------------------------------------
# splits


@dataclass(frozen=True)
class ClassificationSplit:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    mode: str

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "train": self.train.tolist(),
            "val": self.val.tolist(),
            "test": self.test.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ClassificationSplit":
        return cls(
            train=np.asarray(obj["train"], dtype=np.int64),
            val=np.asarray(obj["val"], dtype=np.int64),
            test=np.asarray(obj["test"], dtype=np.int64),
            mode=obj["mode"],
        )


TRAIN_PER_CLASS = 20
VAL_PER_CLASS = 30


def sample_classification_split(
    g: AttributedGraph, mode: str, rng: np.random.Generator
) -> ClassificationSplit:
    """20 x C training and 30 x C validation nodes; the rest is test.

    ``balanced`` draws exactly 20/30 per class, ``imbalanced`` draws the sets
    uniformly from all nodes.
    """
    if g.labels is None:
        raise GraphDataError("classification split requires labels")
    n, c = g.num_nodes, g.num_classes
    n_train, n_val = TRAIN_PER_CLASS * c, VAL_PER_CLASS * c
    if mode == "balanced":
        train, val = [], []
        for k in range(c):
            members = np.flatnonzero(g.labels == k)
            if members.size < TRAIN_PER_CLASS + VAL_PER_CLASS:
                raise GraphDataError(
                    f"class {k} has {members.size} nodes; balanced split needs "
                    f"{TRAIN_PER_CLASS + VAL_PER_CLASS}"
                )
            picked = rng.choice(members, TRAIN_PER_CLASS + VAL_PER_CLASS, replace=False)
            train.append(picked[:TRAIN_PER_CLASS])
            val.append(picked[TRAIN_PER_CLASS:])
        train_ids = np.sort(np.concatenate(train))
        val_ids = np.sort(np.concatenate(val))
    elif mode == "imbalanced":
        if n < n_train + n_val:
            raise GraphDataError(f"{n} nodes cannot hold {n_train}+{n_val} train/val nodes")
        picked = rng.choice(n, n_train + n_val, replace=False)
        train_ids = np.sort(picked[:n_train])
        val_ids = np.sort(picked[n_train:])
    else:
        raise ValueError(f"unknown split mode {mode!r}")
    rest = np.ones(n, dtype=bool)
    rest[train_ids] = False
    rest[val_ids] = False
    return ClassificationSplit(train_ids, val_ids, np.flatnonzero(rest), mode)


@dataclass(frozen=True)
class LinkSplit:
    train_graph: AttributedGraph
    val_pos: np.ndarray
    val_neg: np.ndarray
    test_pos: np.ndarray
    test_neg: np.ndarray

    def to_json(self) -> dict:
        return {
            "train_edges": self.train_graph.edge_list().tolist(),
            "val_pos": self.val_pos.tolist(),
            "val_neg": self.val_neg.tolist(),
            "test_pos": self.test_pos.tolist(),
            "test_neg": self.test_neg.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict, g: AttributedGraph) -> "LinkSplit":
        pairs = {k: np.asarray(obj[k], dtype=np.int64).reshape(-1, 2)
                 for k in ("train_edges", "val_pos", "val_neg", "test_pos", "test_neg")}
        train = replace(g, adj=adjacency_from_edges(pairs["train_edges"], g.num_nodes))
        return cls(train, pairs["val_pos"], pairs["val_neg"], pairs["test_pos"], pairs["test_neg"])


TEST_EDGE_FRACTION = 0.10
VAL_EDGE_FRACTION = 0.05
MAX_REJECTIONS_PER_NEGATIVE = 1000


def make_link_split(g: AttributedGraph, rng: np.random.Generator) -> LinkSplit:
    """Hold out 10% (test) and 5% (val) of edges plus equally many non-edges."""
    edges = g.edge_list()
    m = edges.shape[0]
    if m < 20:
        raise GraphDataError(f"link split needs at least 20 edges, graph has {m}")
    n_test = int(np.floor(m * TEST_EDGE_FRACTION))
    n_val = int(np.floor(m * VAL_EDGE_FRACTION))
    order = rng.permutation(m)
    test_pos = edges[order[:n_test]]
    val_pos = edges[order[n_test:n_test + n_val]]
    train_edges = edges[order[n_test + n_val:]]

    n = g.num_nodes
    taken = set(map(tuple, edges.tolist()))
    negatives = _sample_non_edges(n, n_test + n_val, taken, rng)
    test_neg = negatives[:n_test]
    val_neg = negatives[n_test:]
    train_graph = replace(g, adj=adjacency_from_edges(train_edges, n))
    return LinkSplit(train_graph, val_pos, val_neg, test_pos, test_neg)


def _sample_non_edges(n, count, forbidden, rng):
    # rejection sampling; pairs stored as (min, max) so each is drawn once
    out = []
    seen = set(forbidden)
    budget = MAX_REJECTIONS_PER_NEGATIVE * max(count, 1)
    attempts = 0
    while len(out) < count:
        if attempts >= budget:
            raise GraphDataError(
                f"found only {len(out)} of {count} negative pairs in {budget} attempts; "
                "graph too dense"
            )
        attempts += 1
        i, j = (int(x) for x in rng.integers(0, n, size=2))
        if i == j:
            continue
        pair = (i, j) if i < j else (j, i)
        if pair in seen:
            continue
        seen.add(pair)
        out.append(pair)
    return np.array(out, dtype=np.int64).reshape(-1, 2)
