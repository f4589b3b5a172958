"""Batched combinatorial objective kernels.

Each objective has a loop kernel (numba-compiled when enabled) and a
vectorised numpy twin.  ``X`` is an ``int64`` array with one candidate per
row.
"""

import math

import numpy as np

from .. import _accel
from .._accel import maybe_njit


@maybe_njit
def _tsp_loop(X, cities):
    N, n = X.shape
    out = np.empty(N)
    for r in range(N):
        total = 0.0
        for i in range(n - 1):
            a = X[r, i]
            b = X[r, i + 1]
            dx = cities[a, 0] - cities[b, 0]
            dy = cities[a, 1] - cities[b, 1]
            total += math.sqrt(dx * dx + dy * dy)
        out[r] = -total
    return out


def _tsp_np(X, cities):
    pts = cities[X]
    return -np.sum(np.sqrt(np.sum(np.diff(pts, axis=1) ** 2, axis=2)), axis=1)


@maybe_njit
def _flowshop_loop(X, C):
    N, n = X.shape
    out = np.empty(N)
    for r in range(N):
        total = 0.0
        for i in range(n):
            total += C[i, X[r, i]]
        out[r] = -total
    return out


def _flowshop_np(X, C):
    return -np.sum(C[np.arange(X.shape[1])[None, :], X], axis=1)


@maybe_njit
def _linear_ordering_loop(X, W):
    N, n = X.shape
    out = np.empty(N)
    for r in range(N):
        total = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                total += W[X[r, i], X[r, j]]
        out[r] = total
    return out


def _linear_ordering_np(X, W):
    n = X.shape[1]
    permuted = W[X[:, :, None], X[:, None, :]]
    return np.sum(np.where(np.triu(np.ones((n, n), dtype=bool), k=1)[None], permuted, 0.0), axis=(1, 2))


@maybe_njit
def _qap_loop(X, W, D):
    N, n = X.shape
    out = np.empty(N)
    for r in range(N):
        total = 0.0
        for i in range(n):
            for j in range(n):
                total += W[i, j] * D[X[r, j], X[r, i]]
        out[r] = -total
    return out


def _qap_np(X, W, D):
    return -np.sum(W[None] * D[X[:, None, :], X[:, :, None]], axis=(1, 2))


@maybe_njit
def _nqueens_loop(X):
    N, n = X.shape
    out = np.empty(N)
    for r in range(N):
        count = 0
        for i in range(n):
            for j in range(i + 1, n):
                if abs(X[r, i] - X[r, j]) == j - i:
                    count += 1
        out[r] = -count
    return out


def _nqueens_np(X):
    n = X.shape[1]
    gap = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :])
    attacks = np.abs(X[:, :, None] - X[:, None, :]) == gap[None]
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)
    return -np.sum(attacks & upper[None], axis=(1, 2)).astype(float)


@maybe_njit
def _modular_loop(X, w):
    N, k = X.shape
    out = np.empty(N)
    for r in range(N):
        total = 0.0
        for i in range(k):
            total += w[X[r, i]]
        out[r] = total
    return out


def _modular_np(X, w):
    return np.sum(w[X], axis=1)


@maybe_njit
def _coverage_loop(X, covers, w):
    N, k = X.shape
    m = covers.shape[1]
    out = np.empty(N)
    for r in range(N):
        total = 0.0
        for j in range(m):
            for i in range(k):
                if covers[X[r, i], j]:
                    total += w[j]
                    break
        out[r] = total
    return out


def _coverage_np(X, covers, w):
    union = np.any(covers[X], axis=1)
    return np.sum(np.where(union, w[None, :], 0.0), axis=1)


def logdet_batch(X, M):
    """Log-determinants of principal minors; singular minors give ``-inf``."""
    minors = M[X[:, :, None], X[:, None, :]]
    sign, logabs = np.linalg.slogdet(minors)
    return np.where(sign > 0, logabs, -np.inf)


_KERNELS = {
    "TSP": (_tsp_loop, _tsp_np, ("cities",)),
    "FLOWSHOP": (_flowshop_loop, _flowshop_np, ("C",)),
    "LINEAR_ORDERING": (_linear_ordering_loop, _linear_ordering_np, ("W",)),
    "QAP": (_qap_loop, _qap_np, ("W", "D")),
    "NQUEENS": (_nqueens_loop, _nqueens_np, ()),
    "MODULAR": (_modular_loop, _modular_np, ("w",)),
    "COVERAGE": (_coverage_loop, _coverage_np, ("covers", "w")),
}


def evaluate_batch(kind, X, coeffs, use_numba=None):
    X = np.ascontiguousarray(X, dtype=np.int64)
    if X.ndim == 1:
        X = X[None, :]
    if kind == "LOGDET":
        return logdet_batch(X, coeffs["M"])
    loop, vec, names = _KERNELS[kind]
    args = [np.ascontiguousarray(coeffs[n]) for n in names]
    if use_numba is None:
        use_numba = _accel.USE_NUMBA
    if use_numba:
        return loop(X, *args)
    return vec(X, *args)
