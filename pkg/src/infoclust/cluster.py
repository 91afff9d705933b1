"""Differentiable soft K-means over node embeddings.

Assignments are a temperature softmax of cosine similarity to the centroids,
centroids are assignment-weighted means, and the two updates alternate a
fixed number of times. Gradients flow only through the final
assignment/centroid pair; everything before it is treated as constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import cosine_rows, row_l2_normalize, row_norms, sigmoid

NUM_ITERATIONS = 10
EMPTY_CLUSTER_MASS = 1e-12


@dataclass
class ClusterState:
    centroids: np.ndarray       # K x F', after the last update
    assignments: np.ndarray     # N x K, rows sum to one
    prev_centroids: np.ndarray  # centroids fed into the last soft assignment
    beta: float
    sign: float = 1.0
    iterations: int = NUM_ITERATIONS

    @property
    def num_clusters(self) -> int:
        return self.centroids.shape[0]


def sign_value(assign_sign: str | float) -> float:
    if assign_sign in ("plus", "+", 1, 1.0):
        return 1.0
    if assign_sign in ("minus", "-", -1, -1.0):
        return -1.0
    raise ValueError(f"assign_sign must be 'plus' or 'minus', got {assign_sign!r}")


def init_centroids(h: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Embeddings of ``k`` distinct nodes drawn uniformly."""
    n = h.shape[0]
    if k > n:
        raise ValueError(f"cannot pick {k} centroids from {n} nodes")
    if k < 1:
        raise ValueError("need at least one cluster")
    return h[rng.choice(n, size=k, replace=False)].copy()


def soft_assign(h: np.ndarray, mu: np.ndarray, beta: float, sign: float = 1.0) -> np.ndarray:
    logits = (sign * beta) * cosine_rows(h, mu)
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)


def update_centroids(h: np.ndarray, r: np.ndarray, prev: np.ndarray | None = None) -> np.ndarray:
    """Assignment-weighted means. Clusters with (near) zero mass keep ``prev``."""
    mass = r.sum(axis=0)
    live = mass >= EMPTY_CLUSTER_MASS
    mu = (r.T @ h) / np.where(live, mass, 1.0)[:, None]
    if not live.all():
        if prev is None:
            raise ValueError("empty cluster and no previous centroids to keep")
        mu[~live] = prev[~live]
    return mu


def run_clustering(
    h: np.ndarray,
    k: int,
    beta: float,
    rng: np.random.Generator,
    sign: float = 1.0,
    iterations: int = NUM_ITERATIONS,
) -> ClusterState:
    mu = init_centroids(h, k, rng)
    return iterate_clustering(h, mu, beta, sign, iterations)


def iterate_clustering(h, mu0, beta, sign=1.0, iterations=NUM_ITERATIONS) -> ClusterState:
    if iterations < 1:
        raise ValueError("need at least one iteration")
    mu = mu0
    for _ in range(iterations):
        prev = mu
        r = soft_assign(h, prev, beta, sign)
        mu = update_centroids(h, r, prev)
    return ClusterState(mu, r, prev, float(beta), float(sign), iterations)


def final_step(h: np.ndarray, prev: np.ndarray, beta: float, sign: float = 1.0) -> ClusterState:
    """Only the last assignment/centroid pair, from frozen ``prev`` centroids."""
    r = soft_assign(h, prev, beta, sign)
    return ClusterState(update_centroids(h, r, prev), r, prev, float(beta), float(sign), 1)


def node_cluster_summaries(r: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Per-node summary: sigmoid of the assignment-weighted centroid mix."""
    if r.shape[1] != mu.shape[0]:
        raise ValueError(f"assignments {r.shape} do not match centroids {mu.shape}")
    return sigmoid(r @ mu)


def clustering_backward(h: np.ndarray, state: ClusterState, dz: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. ``h`` of a loss whose gradient w.r.t. the node cluster
    summaries is ``dz``, differentiating only the final unrolled step."""
    r, mu, prev = state.assignments, state.centroids, state.prev_centroids
    z = node_cluster_summaries(r, mu)

    dy = dz * z * (1.0 - z)
    dr = dy @ mu.T
    dmu = r.T @ dy

    # centroid = (r^T h) / mass for clusters that were updated
    mass = r.sum(axis=0)
    live = mass >= EMPTY_CLUSTER_MASS
    safe = np.where(live, mass, 1.0)
    dmu = np.where(live[:, None], dmu, 0.0)
    du = dmu / safe[:, None]
    dmass = -np.einsum("kf,kf->k", dmu, mu) / safe
    dh = r @ du
    dr += h @ du.T + dmass[None, :]

    # softmax over clusters of sign * beta * cos(h_i, prev_k)
    ds = r * (dr - np.einsum("ik,ik->i", r, dr)[:, None])
    dcos = (state.sign * state.beta) * ds
    norms = row_norms(h)
    h_unit = row_l2_normalize(h)
    dh_unit = dcos @ row_l2_normalize(prev)
    radial = np.einsum("ij,ij->i", h_unit, dh_unit)
    nz = norms > 0
    dh[nz] += (dh_unit[nz] - h_unit[nz] * radial[nz, None]) / norms[nz, None]
    return dh
