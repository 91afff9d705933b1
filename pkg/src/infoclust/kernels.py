"""Dense/sparse products, activations and similarity kernels (float64).

Sparse products go through scipy's CSR routine, which walks each row's
stored entries left to right, so results are bitwise reproducible.
"""

from __future__ import annotations

import io

import numpy as np
import scipy.sparse as sp


class NonFiniteError(FloatingPointError):
    """A kernel produced NaN or Inf."""


def _finite(out: np.ndarray, name: str) -> np.ndarray:
    if not np.all(np.isfinite(out)):
        raise NonFiniteError(f"{name}: non-finite output")
    return out


def spmm(s: sp.csr_matrix, d: np.ndarray) -> np.ndarray:
    if s.shape[1] != d.shape[0]:
        raise ValueError(f"spmm: {s.shape} x {d.shape} dimension mismatch")
    return _finite(np.asarray(s @ d, dtype=np.float64), "spmm")


def matmul(a: np.ndarray, b: np.ndarray, trans_a: bool = False, trans_b: bool = False) -> np.ndarray:
    a = a.T if trans_a else a
    b = b.T if trans_b else b
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: {a.shape} x {b.shape} dimension mismatch")
    return _finite(a @ b, "matmul")


def sigmoid(x):
    """Logistic function, evaluated without overflow for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(y, dy):
    return dy * y * (1.0 - y)


def prelu(x, slope: float):
    return np.where(x > 0, x, slope * x)


def prelu_backward(x, slope: float, dy):
    """Returns (dx, dslope) for a single slope shared by every channel."""
    neg = x <= 0
    dx = np.where(neg, slope * dy, dy)
    dslope = float(np.sum(np.where(neg, dy * x, 0.0)))
    return dx, dslope


def row_norms(h: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", h, h))


def row_l2_normalize(h: np.ndarray) -> np.ndarray:
    """Scale every nonzero row to unit length; zero rows stay zero."""
    norms = row_norms(h)
    scale = np.where(norms > 0, 1.0 / np.where(norms > 0, norms, 1.0), 1.0)
    return h * scale[:, None]


def cosine_rows(h: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarity of rows of ``h`` against rows of ``m``.

    A pair involving a zero-norm row has similarity 0.
    """
    if h.shape[1] != m.shape[1]:
        raise ValueError(f"cosine_rows: inner dimensions {h.shape[1]} != {m.shape[1]}")
    return _finite(row_l2_normalize(h) @ row_l2_normalize(m).T, "cosine_rows")


def dense_to_csv(a: np.ndarray) -> str:
    """One row per line, 17 significant digits (round-trips float64 exactly)."""
    buf = io.StringIO()
    for row in np.atleast_2d(a):
        buf.write(",".join(f"{v:.17g}" for v in row))
        buf.write("\n")
    return buf.getvalue()


def dense_from_csv(text: str) -> np.ndarray:
    rows = [ln for ln in text.splitlines() if ln.strip()]
    if not rows:
        return np.zeros((0, 0))
    return np.array([[float(v) for v in ln.split(",")] for ln in rows], dtype=np.float64)
