"""Independent reference computations shared by the unit and acceptance tests."""

import itertools
import math

import numpy as np

from infoclust import model as M
from infoclust.graph import normalize_adjacency

from conftest import random_graph


def fd_instance(seed, alpha, sign, n=20, f=11, fp=7, k=3, beta=2.0):
    """Random graph, params, corruption and a frozen clustering prefix."""
    rng = np.random.default_rng(seed)
    g = random_graph(n, 0.25, f, rng)
    adj = normalize_adjacency(g)
    params = M.ModelParams.init(f, fp, rng)
    params.slope = float(rng.uniform(0.1, 0.5))
    perm = rng.permutation(n)
    cache = M.forward(params, adj, g.features, perm, alpha, beta=beta, num_clusters=k,
                      cluster_rng=rng, sign=sign)
    prev = None if cache.cluster is None else cache.cluster.prev_centroids
    return params, adj, g.features, perm, prev, beta


def frozen_loss(params, adj, x, perm, alpha, beta, sign, prev):
    cache = M.forward(params, adj, x, perm, alpha, beta=beta, sign=sign, prev_centroids=prev)
    return M.loss_total(cache, alpha)


def gradient_relative_errors(seed, alpha, sign, eps=1e-5):
    """Norm-wise relative error of each analytic gradient block against
    central differences of the loss with the clustering prefix frozen."""
    params, adj, x, perm, prev, beta = fd_instance(seed, alpha, sign)
    cache = M.forward(params, adj, x, perm, alpha, beta=beta, sign=sign, prev_centroids=prev)
    grads = M.backward(cache, params, alpha)

    def f(p):
        return frozen_loss(p, adj, x, perm, alpha, beta, sign, prev)

    errors = {}
    for name in ("theta", "w"):
        base = getattr(params, name)
        fd = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            plus, minus = params.copy(), params.copy()
            getattr(plus, name)[idx] += eps
            getattr(minus, name)[idx] -= eps
            fd[idx] = (f(plus) - f(minus)) / (2 * eps)
        errors[name] = _rel(getattr(grads, name), fd)
    plus, minus = params.copy(), params.copy()
    plus.slope += eps
    minus.slope -= eps
    errors["slope"] = _rel(np.array([grads.slope]), np.array([(f(plus) - f(minus)) / (2 * eps)]))
    return errors


def _rel(a, b):
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if denom == 0 else float(np.linalg.norm(a - b) / denom)


# ---------------------------------------------------------------------------
# metric oracles


def auc_pairs(pos, neg):
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def ap_sweep(pos, neg):
    """Precision at every threshold where recall increases, negatives
    placed ahead of positives on tied scores."""
    items = [(s, 1) for s in pos] + [(s, 0) for s in neg]
    items.sort(key=lambda t: (-t[0], t[1]))
    hits, total = 0, 0.0
    for rank, (_, y) in enumerate(items, start=1):
        if y:
            hits += 1
            total += hits / rank
    return total / len(pos)


def _table(a, b):
    ka, kb = sorted(set(a)), sorted(set(b))
    return [[sum(1 for x, y in zip(a, b) if x == u and y == v) for v in kb] for u in ka]


def nmi_brute(a, b):
    n = len(a)
    t = _table(a, b)
    ra = [sum(r) for r in t]
    cb = [sum(c) for c in zip(*t)]
    ha = -sum(x / n * math.log(x / n) for x in ra if x)
    hb = -sum(x / n * math.log(x / n) for x in cb if x)
    if ha == 0 and hb == 0:
        return 1.0
    mi = 0.0
    for i, row in enumerate(t):
        for j, nij in enumerate(row):
            if nij:
                mi += nij / n * math.log(n * nij / (ra[i] * cb[j]))
    return max(mi / ((ha + hb) / 2), 0.0)


def ari_brute(a, b):
    """Adjusted Rand index by explicit pair counting."""
    n = len(a)
    same_a = same_b = both = 0
    for i, j in itertools.combinations(range(n), 2):
        sa, sb = a[i] == a[j], b[i] == b[j]
        same_a += sa
        same_b += sb
        both += sa and sb
    pairs = n * (n - 1) / 2
    expected = same_a * same_b / pairs
    top = (same_a + same_b) / 2
    if top == expected:
        return 1.0
    return (both - expected) / (top - expected)


def silhouette_brute(h, labels):
    n = len(labels)
    dist = lambda i, j: math.sqrt(sum((h[i][d] - h[j][d]) ** 2 for d in range(len(h[i]))))
    vals = []
    for i in range(n):
        own = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not own:
            vals.append(0.0)
            continue
        a = sum(dist(i, j) for j in own) / len(own)
        b = min(
            sum(dist(i, j) for j in range(n) if labels[j] == c) / sum(1 for j in range(n) if labels[j] == c)
            for c in set(labels) if c != labels[i]
        )
        m = max(a, b)
        vals.append(0.0 if m == 0 else (b - a) / m)
    return sum(vals) / n
