"""Planted-partition attributed graphs for tests and demos."""

from __future__ import annotations

import numpy as np

from .graph import AttributedGraph, make_graph


def planted_partition(
    num_nodes: int,
    num_classes: int,
    num_features: int,
    p_in: float,
    p_out: float,
    rng: np.random.Generator,
    feature_signal: float = 0.3,
    feature_density: float = 0.05,
) -> AttributedGraph:
    """Stochastic block model with sparse binary bag-of-words style features.

    Each class owns a block of ``num_features // num_classes`` words that its
    nodes switch on with extra probability ``feature_signal``.
    """
    labels = np.sort(rng.integers(0, num_classes, size=num_nodes))
    same = labels[:, None] == labels[None, :]
    prob = np.where(same, p_in, p_out)
    upper = np.triu(rng.random((num_nodes, num_nodes)) < prob, k=1)
    edges = np.argwhere(upper)

    block = max(num_features // num_classes, 1)
    owner = np.minimum(np.arange(num_features) // block, num_classes - 1)
    p_word = feature_density + feature_signal * (owner[None, :] == labels[:, None])
    features = (rng.random((num_nodes, num_features)) < p_word).astype(np.float64)
    return make_graph(edges, features, labels, num_classes)
