"""GCN encoder, summaries, discriminators, the contrastive loss and its gradient.

Loss (minimised)::

    L = -[ alpha * L_graph + (1 - alpha) * L_cluster ]
    L_graph   = mean_i log D1(h_i, s)   + mean_i log(1 - D1(h~_i, s))
    L_cluster = mean_i log DK(h_i, z_i) + mean_i log(1 - DK(h~_i, z_i))

with D1(h, s) = sigmoid(h^T W s), DK(h, z) = sigmoid(h^T z), s the sigmoid of
the mean real embedding and z_i the node's cluster summary computed from the
real embeddings. Fake embeddings h~ come from row-shuffled features.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import cluster as cl
from .kernels import matmul, prelu, prelu_backward, sigmoid, spmm

PROB_EPS = 1e-7
PRELU_INIT = 0.25


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class ModelParams:
    theta: np.ndarray   # F x F'
    slope: float        # PReLU negative slope, shared by all channels
    w: np.ndarray       # F' x F' bilinear discriminator weight

    @classmethod
    def init(cls, num_features: int, embed_dim: int, rng: np.random.Generator) -> "ModelParams":
        theta = glorot(rng, num_features, embed_dim)
        w = glorot(rng, embed_dim, embed_dim)
        return cls(theta, PRELU_INIT, w)

    @property
    def num_features(self) -> int:
        return self.theta.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.theta.shape[1]

    def copy(self) -> "ModelParams":
        return ModelParams(self.theta.copy(), float(self.slope), self.w.copy())

    def arrays(self) -> dict[str, np.ndarray]:
        return {"theta": self.theta, "slope": np.array([self.slope]), "w": self.w}


@dataclass
class Gradients:
    theta: np.ndarray
    slope: float
    w: np.ndarray

    def arrays(self) -> dict[str, np.ndarray]:
        return {"theta": self.theta, "slope": np.array([self.slope]), "w": self.w}


@dataclass
class ForwardCache:
    x: np.ndarray
    perm: np.ndarray
    pre: np.ndarray
    pre_fake: np.ndarray
    h: np.ndarray
    h_fake: np.ndarray
    summary: np.ndarray
    ws: np.ndarray                  # W s, reused by both D1 families
    logit_g_real: np.ndarray
    logit_g_fake: np.ndarray
    cluster: cl.ClusterState | None = None
    z: np.ndarray | None = None
    logit_c_real: np.ndarray | None = None
    logit_c_fake: np.ndarray | None = None
    norm_adj: sp.csr_matrix | None = field(default=None, repr=False)

    @property
    def num_nodes(self) -> int:
        return self.h.shape[0]


# ---------------------------------------------------------------------------
# forward pieces


def encode(params: ModelParams, norm_adj: sp.csr_matrix, x: np.ndarray) -> np.ndarray:
    return prelu(_propagate(params, norm_adj, x), params.slope)


def _propagate(params, norm_adj, x):
    if x.shape[1] != params.theta.shape[0]:
        raise ValueError(f"features have {x.shape[1]} columns, theta expects {params.theta.shape[0]}")
    if norm_adj.shape != (x.shape[0], x.shape[0]):
        raise ValueError(f"adjacency {norm_adj.shape} does not match {x.shape[0]} nodes")
    return spmm(norm_adj, project(x, params.theta))


def project(x, theta: np.ndarray) -> np.ndarray:
    """X @ theta for dense or CSR features."""
    return spmm(x, theta) if sp.issparse(x) else matmul(x, theta)


SPARSE_FEATURE_DENSITY = 0.1


def feature_operand(features: np.ndarray):
    """CSR copy of mostly-zero feature matrices (bag-of-words), else as is."""
    if features.size and np.count_nonzero(features) <= SPARSE_FEATURE_DENSITY * features.size:
        return sp.csr_matrix(features)
    return features


def global_summary(h: np.ndarray) -> np.ndarray:
    return sigmoid(h.mean(axis=0))


def disc_global(h: np.ndarray, s: np.ndarray, w: np.ndarray) -> np.ndarray:
    """sigmoid(h^T W s) for a single embedding or each row of a matrix."""
    return sigmoid(h @ (w @ s))


def disc_cluster(h: np.ndarray, z: np.ndarray) -> np.ndarray:
    """sigmoid(h^T z), rowwise when given matrices."""
    if h.shape != z.shape:
        raise ValueError(f"shape mismatch {h.shape} vs {z.shape}")
    return sigmoid(np.sum(h * z, axis=-1))


def forward(
    params: ModelParams,
    norm_adj: sp.csr_matrix,
    x: np.ndarray,
    perm: np.ndarray,
    alpha: float,
    beta: float = 10.0,
    num_clusters: int = 1,
    cluster_rng: np.random.Generator | None = None,
    sign: float = 1.0,
    prev_centroids: np.ndarray | None = None,
) -> ForwardCache:
    """Real and corrupted passes plus summaries and discriminator logits.

    The corrupted input uses features ``x[perm]``. Clustering is skipped when
    ``alpha == 1``. With ``prev_centroids`` given, only the final clustering
    step runs from those frozen centroids, which is exactly the function the
    backward pass differentiates.
    """
    _check_alpha(alpha)
    proj = project(x, params.theta)
    pre = spmm(norm_adj, proj)
    pre_fake = spmm(norm_adj, proj[perm])
    h = prelu(pre, params.slope)
    h_fake = prelu(pre_fake, params.slope)

    s = global_summary(h)
    ws = params.w @ s
    cache = ForwardCache(
        x=x, perm=perm, pre=pre, pre_fake=pre_fake, h=h, h_fake=h_fake,
        summary=s, ws=ws, logit_g_real=h @ ws, logit_g_fake=h_fake @ ws,
        norm_adj=norm_adj,
    )
    if alpha < 1.0:
        if prev_centroids is not None:
            state = cl.final_step(h, prev_centroids, beta, sign)
        else:
            if cluster_rng is None:
                raise ValueError("cluster_rng or prev_centroids required when alpha < 1")
            state = cl.run_clustering(h, num_clusters, beta, cluster_rng, sign)
        z = cl.node_cluster_summaries(state.assignments, state.centroids)
        cache.cluster = state
        cache.z = z
        cache.logit_c_real = np.einsum("ij,ij->i", h, z)
        cache.logit_c_fake = np.einsum("ij,ij->i", h_fake, z)
    return cache


def _check_alpha(alpha: float) -> None:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")


# ---------------------------------------------------------------------------
# loss


def _log_prob(logits: np.ndarray, positive: bool) -> np.ndarray:
    p = np.clip(sigmoid(logits), PROB_EPS, 1.0 - PROB_EPS)
    return np.log(p) if positive else np.log(1.0 - p)


def _bce_grad(logits: np.ndarray, positive: bool, scale: float) -> np.ndarray:
    # d(-scale * log clip(p))/dlogit; zero where the clamp is active
    p = sigmoid(logits)
    active = (p > PROB_EPS) & (p < 1.0 - PROB_EPS)
    g = -scale * (1.0 - p) if positive else scale * p
    return np.where(active, g, 0.0)


def graph_term(cache: ForwardCache) -> float:
    return float(np.mean(_log_prob(cache.logit_g_real, True))
                 + np.mean(_log_prob(cache.logit_g_fake, False)))


def cluster_term(cache: ForwardCache) -> float:
    if cache.z is None:
        raise ValueError("cache has no cluster summaries (forward ran with alpha == 1)")
    return float(np.mean(_log_prob(cache.logit_c_real, True))
                 + np.mean(_log_prob(cache.logit_c_fake, False)))


def loss_total(cache: ForwardCache, alpha: float) -> float:
    _check_alpha(alpha)
    loss = -alpha * graph_term(cache)
    if alpha < 1.0:
        loss -= (1.0 - alpha) * cluster_term(cache)
    return float(loss)


# ---------------------------------------------------------------------------
# backward


def backward(cache: ForwardCache, params: ModelParams, alpha: float) -> Gradients:
    """Exact gradient of :func:`loss_total` (last-step unrolled clustering)."""
    _check_alpha(alpha)
    h, h_fake, s = cache.h, cache.h_fake, cache.summary
    if h.shape[1] != params.embed_dim or cache.x.shape[1] != params.num_features:
        raise ValueError("cache does not match parameter shapes")
    n = cache.num_nodes

    g_real = _bce_grad(cache.logit_g_real, True, alpha / n)
    g_fake = _bce_grad(cache.logit_g_fake, False, alpha / n)
    dh = np.outer(g_real, cache.ws)
    dh_fake = np.outer(g_fake, cache.ws)
    # logit = h^T W s
    u = h.T @ g_real + h_fake.T @ g_fake
    dw = np.outer(u, s)
    ds = params.w.T @ u

    if alpha < 1.0:
        if cache.z is None:
            raise ValueError("cache has no cluster state but alpha < 1")
        z = cache.z
        c_real = _bce_grad(cache.logit_c_real, True, (1.0 - alpha) / n)
        c_fake = _bce_grad(cache.logit_c_fake, False, (1.0 - alpha) / n)
        dh += c_real[:, None] * z
        dh_fake += c_fake[:, None] * z
        dz = c_real[:, None] * h + c_fake[:, None] * h_fake
        dh += cl.clustering_backward(h, cache.cluster, dz)

    # s = sigmoid(mean(h))
    dh += (ds * s * (1.0 - s) / n)[None, :]

    dpre, dslope = prelu_backward(cache.pre, params.slope, dh)
    dpre_fake, dslope_fake = prelu_backward(cache.pre_fake, params.slope, dh_fake)
    norm_adj = cache.norm_adj
    dproj = spmm(norm_adj.T.tocsr(), dpre)
    dproj_fake = spmm(norm_adj.T.tocsr(), dpre_fake)
    # fake projection rows are proj[perm]; scatter them back before X^T
    dproj[cache.perm] += dproj_fake
    if sp.issparse(cache.x):
        dtheta = spmm(cache.x.T.tocsr(), dproj)
    else:
        dtheta = matmul(cache.x, dproj, trans_a=True)
    return Gradients(dtheta, dslope + dslope_fake, dw)


def loss_and_grad(params, norm_adj, x, perm, alpha, **kw) -> tuple[float, Gradients, ForwardCache]:
    cache = forward(params, norm_adj, x, perm, alpha, **kw)
    return loss_total(cache, alpha), backward(cache, params, alpha), cache
