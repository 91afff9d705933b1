import json

import numpy as np
import pytest
from scipy import stats

from infoclust.graph import (
    GraphDataError,
    corrupt,
    extract_lcc,
    load_graph,
    make_graph,
    make_link_split,
    normalize_adjacency,
    sample_classification_split,
    save_graph,
)

from conftest import random_graph


def _write_dataset(root, n, f, edges_text, features=None, labels=None, c=0):
    root.mkdir()
    (root / "meta.json").write_text(json.dumps({"num_nodes": n, "num_features": f, "num_classes": c}))
    (root / "edges.csv").write_text(edges_text)
    rows = features if features is not None else ["1.0"] * n
    (root / "features.csv").write_text("\n".join(rows) + "\n")
    if labels is not None:
        (root / "labels.csv").write_text("\n".join(map(str, labels)) + "\n")
    return root


def test_single_edge_is_symmetrized(tmp_path):
    g = load_graph(_write_dataset(tmp_path / "d", 2, 1, "0,1\n"))
    assert g.num_nodes == 2
    assert g.adj.indices[g.adj.indptr[0]:g.adj.indptr[1]].tolist() == [1]
    assert g.adj.indices[g.adj.indptr[1]:g.adj.indptr[2]].tolist() == [0]


def test_duplicate_and_reversed_edges_collapse(tmp_path):
    g = load_graph(_write_dataset(tmp_path / "d", 3, 1, "0,1\n1,0\n0,1\n1,2\n2,2\n"))
    assert g.num_edges == 2
    assert g.adj.diagonal().sum() == 0


def test_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    g = random_graph(10, 0.3, 4, rng, num_classes=3)
    save_graph(g, tmp_path / "g")
    back = load_graph(tmp_path / "g")
    assert (back.adj != g.adj).nnz == 0
    assert np.array_equal(back.adj.indices, g.adj.indices)
    assert np.array_equal(back.features, g.features)
    assert np.array_equal(back.labels, g.labels)


def test_missing_directory():
    with pytest.raises(GraphDataError, match="not found"):
        load_graph("/nonexistent/dataset")


def test_bad_edge_reports_line(tmp_path):
    root = _write_dataset(tmp_path / "d", 3, 1, "0,1\n1,9\n")
    with pytest.raises(GraphDataError, match=r"edges\.csv:2"):
        load_graph(root)


def test_bad_feature_reports_line(tmp_path):
    root = _write_dataset(tmp_path / "d", 2, 1, "0,1\n", features=["1.0", "oops"])
    with pytest.raises(GraphDataError, match=r"features\.csv:2"):
        load_graph(root)


def test_label_out_of_range(tmp_path):
    root = _write_dataset(tmp_path / "d", 2, 1, "0,1\n", labels=[0, 5], c=2)
    with pytest.raises(GraphDataError, match=r"labels\.csv:2"):
        load_graph(root)


def test_lcc_complete_graph_identity():
    g = make_graph([(0, 1), (1, 2), (0, 2)], np.eye(3))
    sub, ids = extract_lcc(g)
    assert ids.tolist() == [0, 1, 2]
    assert (sub.adj != g.adj).nnz == 0


def test_lcc_tie_goes_to_smallest_node():
    # isolated node 0, triangles {1,2,3} and {4,5,6}
    g = make_graph([(4, 5), (5, 6), (4, 6), (1, 2), (2, 3), (1, 3)], np.arange(7.0)[:, None])
    sub, ids = extract_lcc(g)
    assert ids.tolist() == [1, 2, 3]
    assert sub.num_edges == 3
    assert sub.features[:, 0].tolist() == [1.0, 2.0, 3.0]


def test_lcc_picks_largest():
    g = make_graph([(0, 1), (2, 3), (3, 4)], np.zeros((5, 1)))
    _, ids = extract_lcc(g)
    assert ids.tolist() == [2, 3, 4]


def test_normalize_isolated_node():
    g = make_graph(np.zeros((0, 2)), np.ones((1, 1)))
    assert normalize_adjacency(g).toarray().tolist() == [[1.0]]


def test_normalize_single_edge():
    g = make_graph([(0, 1)], np.ones((2, 1)))
    assert np.array_equal(normalize_adjacency(g).toarray(), np.full((2, 2), 0.5))


@pytest.mark.parametrize("seed", range(5))
def test_normalize_matches_dense(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(6, 0.4, 2, rng)
    a = g.adj.toarray() + np.eye(6)
    d = np.diag(1.0 / np.sqrt(a.sum(axis=1)))
    got = normalize_adjacency(g).toarray()
    np.testing.assert_allclose(got, d @ a @ d, rtol=1e-14, atol=0)
    assert np.array_equal(got, got.T)


def test_balanced_split_one_class():
    g = make_graph(np.zeros((0, 2)), np.zeros((60, 1)), np.zeros(60, int), 1)
    s = sample_classification_split(g, "balanced", np.random.default_rng(0))
    assert (len(s.train), len(s.val), len(s.test)) == (20, 30, 10)
    assert len(set(s.train) | set(s.val) | set(s.test)) == 60


def test_balanced_split_needs_enough_per_class():
    labels = np.array([0] * 60 + [1] * 10)
    g = make_graph(np.zeros((0, 2)), np.zeros((70, 1)), labels, 2)
    with pytest.raises(GraphDataError, match="class 1"):
        sample_classification_split(g, "balanced", np.random.default_rng(0))


def test_balanced_split_counts_per_class():
    labels = np.repeat(np.arange(3), [70, 90, 55])
    g = make_graph(np.zeros((0, 2)), np.zeros((215, 1)), labels, 3)
    s = sample_classification_split(g, "balanced", np.random.default_rng(1))
    assert np.bincount(labels[s.train]).tolist() == [20, 20, 20]
    assert np.bincount(labels[s.val]).tolist() == [30, 30, 30]


def test_imbalanced_split_follows_class_frequencies():
    # skewed 3-class graph; per-seed training counts should be hypergeometric,
    # so pooled counts over seeds match the class proportions
    labels = np.repeat(np.arange(3), [300, 150, 50])
    g = make_graph(np.zeros((0, 2)), np.zeros((500, 1)), labels, 3)
    counts = np.zeros(3)
    for seed in range(1000):
        s = sample_classification_split(g, "imbalanced", np.random.default_rng(seed))
        assert len(s.train) == 60 and len(s.val) == 90
        assert not set(s.train) & set(s.val)
        counts += np.bincount(labels[s.train], minlength=3)
    expected = counts.sum() * np.array([300, 150, 50]) / 500
    _, p = stats.chisquare(counts, expected)
    assert p > 1e-3


def _random_edges(m_edges, n, seed=0):
    rng = np.random.default_rng(seed)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    picked = rng.choice(len(pairs), m_edges, replace=False)
    return [pairs[k] for k in picked]


def test_link_split_counts_and_disjointness():
    edges = _random_edges(100, 60)
    g = make_graph(edges, np.zeros((60, 1)))
    assert g.num_edges == 100
    s = make_link_split(g, np.random.default_rng(0))
    assert len(s.test_pos) == 10 and len(s.val_pos) == 5
    assert s.train_graph.num_edges == 85
    assert len(s.test_neg) == 10 and len(s.val_neg) == 5

    full = {tuple(e) for e in g.edge_list().tolist()}
    train = {tuple(e) for e in s.train_graph.edge_list().tolist()}
    test = {tuple(e) for e in s.test_pos.tolist()}
    val = {tuple(e) for e in s.val_pos.tolist()}
    assert train | test | val == full
    assert not (train & test) and not (train & val) and not (test & val)
    negs = [tuple(e) for e in np.concatenate([s.test_neg, s.val_neg]).tolist()]
    assert len(set(negs)) == len(negs)
    for i, j in negs:
        assert i < j and (i, j) not in full


def test_link_split_complete_graph_fails():
    edges = [(i, j) for i in range(7) for j in range(i + 1, 7)]
    g = make_graph(edges, np.zeros((7, 1)))
    with pytest.raises(GraphDataError, match="dense"):
        make_link_split(g, np.random.default_rng(0))


def test_link_split_k5_fails():
    edges = [(i, j) for i in range(5) for j in range(i + 1, 5)]
    g = make_graph(edges, np.zeros((5, 1)))
    with pytest.raises(GraphDataError):
        make_link_split(g, np.random.default_rng(0))


def test_corrupt_permutes_rows():
    rng = np.random.default_rng(0)
    g = random_graph(12, 0.3, 3, rng)
    c = corrupt(g, np.random.default_rng(5))
    assert c.adj is g.adj
    assert sorted(map(tuple, c.features.tolist())) == sorted(map(tuple, g.features.tolist()))


def test_corrupt_single_node():
    g = make_graph(np.zeros((0, 2)), np.array([[1.0, 2.0]]))
    assert np.array_equal(corrupt(g, np.random.default_rng(0)).features, g.features)


def test_corrupt_deterministic():
    g = make_graph([(0, 1)], np.arange(10.0).reshape(5, 2))
    a = corrupt(g, np.random.default_rng(42)).features
    b = corrupt(g, np.random.default_rng(42)).features
    perm = np.random.default_rng(42).permutation(5)
    assert np.array_equal(a, b)
    assert np.array_equal(a, g.features[perm])
