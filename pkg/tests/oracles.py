"""Independent reference computations used to check the library.

Everything here is deliberately written against the math, not against the
library's internals: dense projected-gradient ascent for the dual QP, naive
nearest-neighbor search, and exhaustive grid search.
"""

from __future__ import annotations

import numpy as np


def rbf_matrix(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
    return np.exp(-gamma * d2)


def linear_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b.T


def project_dual(v: np.ndarray, y: np.ndarray, caps: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {0 <= a <= caps, y.a = 0}.

    h(nu) = y . clip(v - nu*y, 0, caps) is piecewise linear and nonincreasing
    in nu; the crossing is found exactly from the breakpoints.
    """
    def h(nu):
        return float(np.dot(y, np.clip(v - nu * y, 0.0, caps)))

    bps = np.sort(np.concatenate([y * v, y * (v - caps)]))
    vals = np.array([h(b) for b in bps])
    idx = int(np.searchsorted(-vals, 0.0))
    if idx == 0:
        nu = bps[0]
    elif idx >= bps.size:
        nu = bps[-1]
    else:
        b0, h0 = bps[idx - 1], vals[idx - 1]
        b1, h1 = bps[idx], vals[idx]
        nu = b0 if h1 == h0 else b0 - h0 * (b1 - b0) / (h1 - h0)
    return np.clip(v - nu * y, 0.0, caps)


def qp_dual_oracle(K: np.ndarray, y: np.ndarray, caps: np.ndarray,
                   max_iters: int = 200_000):
    """Projected-gradient ascent on the SVM dual; returns (alpha, objective)."""
    Q = (y[:, None] * y[None, :]) * K
    lip = float(np.linalg.eigvalsh(Q)[-1])
    eta = 1.0 / max(lip, 1e-12)
    a = np.zeros(len(y))
    prev = -np.inf
    for t in range(max_iters):
        a = project_dual(a + eta * (1.0 - Q @ a), y, caps)
        if t % 200 == 199:
            obj = float(a.sum() - 0.5 * a @ Q @ a)
            if abs(obj - prev) < 1e-13 * max(1.0, abs(obj)):
                break
            prev = obj
    return a, float(a.sum() - 0.5 * a @ Q @ a)


def brute_knn(x: np.ndarray, k: int):
    """Naive exact k-NN with explicit (distance, index) ordering."""
    n = x.shape[0]
    ids = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        d2 = ((x - x[i]) ** 2).sum(axis=1)
        d2[i] = np.inf
        order = sorted(range(n), key=lambda j: (d2[j], j))
        ids[i] = order[:k]
    return ids
