"""Hot numeric kernels with two interchangeable backends.

Every kernel exists in a pure-numpy form and, when numba is importable, a
compiled ``@njit`` twin.  The active backend is chosen once at import time
from the ``UDADIL_BACKEND`` environment variable:

* ``auto`` (default) -- numba when available, numpy otherwise;
* ``numba``          -- require the compiled kernels, fail if unavailable;
* ``numpy``          -- force the fallback path.

``benchmarks/bench_kernels.py`` times the two paths against each other.
All kernels are pure functions of their arguments and thread-safe.
"""

from __future__ import annotations

import os

import numpy as np

_VALID_BACKENDS = ("auto", "numba", "numpy")

try:
    from numba import njit

    _NUMBA_OK = True
except ImportError:  # pragma: no cover - exercised only on stripped installs
    _NUMBA_OK = False

# Keep numpy fallbacks bounded in memory: elements per broadcast chunk.
_CHUNK_ELEMS = 2 ** 22


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def _pairwise_sqdist_numpy(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    # Difference-based form: exact zeros for identical points, unlike the
    # BLAS x^2 + y^2 - 2xy expansion.
    n, d = X.shape
    m = Y.shape[0]
    out = np.empty((n, m))
    step = max(1, _CHUNK_ELEMS // max(1, m * d))
    for i0 in range(0, n, step):
        i1 = min(n, i0 + step)
        diff = X[i0:i1, None, :] - Y[None, :, :]
        out[i0:i1] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def _sinkhorn_scaling_numpy(K, a, b, tol, max_iter, check_every=10):
    n, m = K.shape
    u = np.ones(n)
    v = np.ones(m)
    err = np.inf
    it = 0
    while it < max_iter:
        it += 1
        Kv = K @ v
        if np.any((Kv == 0.0) & (a > 0.0)) or not np.all(np.isfinite(Kv)):
            return u, v, err, it, False
        u = np.where(a > 0.0, a / np.where(Kv > 0.0, Kv, 1.0), 0.0)
        Ku = K.T @ u
        if np.any((Ku == 0.0) & (b > 0.0)) or not np.all(np.isfinite(Ku)):
            return u, v, err, it, False
        v = np.where(b > 0.0, b / np.where(Ku > 0.0, Ku, 1.0), 0.0)
        if it % check_every == 0 or it == max_iter:
            P = u[:, None] * K * v[None, :]
            err = max(
                np.abs(P.sum(axis=1) - a).max(),
                np.abs(P.sum(axis=0) - b).max(),
            )
            if not np.isfinite(err):
                return u, v, err, it, False
            if err < tol:
                break
    return u, v, err, it, True


def _sinkhorn_log_numpy(C, loga, logb, eps, tol, max_iter, check_every=10):
    f = np.zeros(C.shape[0])
    g = np.zeros(C.shape[1])
    err = np.inf
    it = 0
    while it < max_iter:
        it += 1
        M = (g[None, :] - C) / eps
        mx = M.max(axis=1)
        f = eps * (loga - (mx + np.log(np.exp(M - mx[:, None]).sum(axis=1))))
        M = (f[:, None] - C) / eps
        mx = M.max(axis=0)
        g = eps * (logb - (mx + np.log(np.exp(M - mx[None, :]).sum(axis=0))))
        if it % check_every == 0 or it == max_iter:
            P = np.exp((f[:, None] + g[None, :] - C) / eps)
            err = max(
                np.abs(P.sum(axis=1) - np.exp(loga)).max(),
                np.abs(P.sum(axis=0) - np.exp(logb)).max(),
            )
            if err < tol:
                break
    return f, g, err, it


def _assign_nearest_numpy(X: np.ndarray, centroids: np.ndarray):
    D = _pairwise_sqdist_numpy(X, centroids)
    labels = np.argmin(D, axis=1)
    return labels.astype(np.int64), D[np.arange(X.shape[0]), labels]


_NUMPY_IMPLS = {
    "pairwise_sqdist": _pairwise_sqdist_numpy,
    "sinkhorn_scaling": _sinkhorn_scaling_numpy,
    "sinkhorn_log": _sinkhorn_log_numpy,
    "assign_nearest": _assign_nearest_numpy,
}


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if _NUMBA_OK:

    @njit(cache=True)
    def _pairwise_sqdist_numba(X, Y):
        n, d = X.shape
        m = Y.shape[0]
        out = np.empty((n, m))
        for i in range(n):
            for j in range(m):
                s = 0.0
                for k in range(d):
                    t = X[i, k] - Y[j, k]
                    s += t * t
                out[i, j] = s
        return out

    @njit(cache=True)
    def _sinkhorn_scaling_numba(K, a, b, tol, max_iter, check_every=10):
        n, m = K.shape
        u = np.ones(n)
        v = np.ones(m)
        err = np.inf
        it = 0
        while it < max_iter:
            it += 1
            for i in range(n):
                s = 0.0
                for j in range(m):
                    s += K[i, j] * v[j]
                if a[i] > 0.0:
                    if s == 0.0 or not np.isfinite(s):
                        return u, v, err, it, False
                    u[i] = a[i] / s
                else:
                    u[i] = 0.0
            for j in range(m):
                s = 0.0
                for i in range(n):
                    s += K[i, j] * u[i]
                if b[j] > 0.0:
                    if s == 0.0 or not np.isfinite(s):
                        return u, v, err, it, False
                    v[j] = b[j] / s
                else:
                    v[j] = 0.0
            if it % check_every == 0 or it == max_iter:
                err = 0.0
                for i in range(n):
                    rs = 0.0
                    for j in range(m):
                        rs += u[i] * K[i, j] * v[j]
                    dlt = abs(rs - a[i])
                    if dlt > err:
                        err = dlt
                for j in range(m):
                    cs = 0.0
                    for i in range(n):
                        cs += u[i] * K[i, j] * v[j]
                    dlt = abs(cs - b[j])
                    if dlt > err:
                        err = dlt
                if not np.isfinite(err):
                    return u, v, err, it, False
                if err < tol:
                    break
        return u, v, err, it, True

    @njit(cache=True)
    def _sinkhorn_log_numba(C, loga, logb, eps, tol, max_iter, check_every=10):
        n, m = C.shape
        f = np.zeros(n)
        g = np.zeros(m)
        row = np.empty(m)
        col = np.empty(n)
        err = np.inf
        it = 0
        while it < max_iter:
            it += 1
            for i in range(n):
                mx = -np.inf
                for j in range(m):
                    row[j] = (g[j] - C[i, j]) / eps
                    if row[j] > mx:
                        mx = row[j]
                s = 0.0
                for j in range(m):
                    s += np.exp(row[j] - mx)
                f[i] = eps * (loga[i] - (mx + np.log(s)))
            for j in range(m):
                mx = -np.inf
                for i in range(n):
                    col[i] = (f[i] - C[i, j]) / eps
                    if col[i] > mx:
                        mx = col[i]
                s = 0.0
                for i in range(n):
                    s += np.exp(col[i] - mx)
                g[j] = eps * (logb[j] - (mx + np.log(s)))
            if it % check_every == 0 or it == max_iter:
                err = 0.0
                for i in range(n):
                    rs = 0.0
                    for j in range(m):
                        rs += np.exp((f[i] + g[j] - C[i, j]) / eps)
                    dlt = abs(rs - np.exp(loga[i]))
                    if dlt > err:
                        err = dlt
                for j in range(m):
                    cs = 0.0
                    for i in range(n):
                        cs += np.exp((f[i] + g[j] - C[i, j]) / eps)
                    dlt = abs(cs - np.exp(logb[j]))
                    if dlt > err:
                        err = dlt
                if err < tol:
                    break
        return f, g, err, it

    @njit(cache=True)
    def _assign_nearest_numba(X, centroids):
        n, d = X.shape
        k = centroids.shape[0]
        labels = np.empty(n, dtype=np.int64)
        dists = np.empty(n)
        for i in range(n):
            best = np.inf
            arg = 0
            for c in range(k):
                s = 0.0
                for q in range(d):
                    t = X[i, q] - centroids[c, q]
                    s += t * t
                if s < best:
                    best = s
                    arg = c
            labels[i] = arg
            dists[i] = best
        return labels, dists

    _NUMBA_IMPLS = {
        "pairwise_sqdist": _pairwise_sqdist_numba,
        "sinkhorn_scaling": _sinkhorn_scaling_numba,
        "sinkhorn_log": _sinkhorn_log_numba,
        "assign_nearest": _assign_nearest_numba,
    }
else:
    _NUMBA_IMPLS = {}


# ---------------------------------------------------------------------------
# backend selection
# ---------------------------------------------------------------------------

def _resolve_backend(requested: str) -> str:
    if requested not in _VALID_BACKENDS:
        raise ValueError(
            f"UDADIL_BACKEND={requested!r} is not one of {_VALID_BACKENDS}"
        )
    if requested == "numpy":
        return "numpy"
    if requested == "numba" and not _NUMBA_OK:
        raise ImportError(
            "UDADIL_BACKEND=numba requested but numba is not importable"
        )
    return "numba" if _NUMBA_OK else "numpy"


_BACKEND = _resolve_backend(os.environ.get("UDADIL_BACKEND", "auto").lower())

IMPLEMENTATIONS = {"numpy": _NUMPY_IMPLS}
if _NUMBA_OK:
    IMPLEMENTATIONS["numba"] = _NUMBA_IMPLS


def active_backend() -> str:
    """Name of the kernel backend selected at import ('numba' or 'numpy')."""
    return _BACKEND


def set_backend(name: str) -> str:
    """Switch kernels at runtime (tests/benchmarks); returns the new backend."""
    global _BACKEND
    _BACKEND = _resolve_backend(name)
    return _BACKEND


def pairwise_sqdist(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """All-pairs squared Euclidean distances, shape (len(X), len(Y))."""
    return IMPLEMENTATIONS[_BACKEND]["pairwise_sqdist"](X, Y)


def sinkhorn_scaling(K, a, b, tol, max_iter, check_every=10):
    """Plain-domain Sinkhorn scaling on kernel K; returns (u, v, err, it, ok).

    ``ok`` is False when the scaling vectors under/overflowed before reaching
    ``tol`` (callers should switch to the log-domain path).
    """
    return IMPLEMENTATIONS[_BACKEND]["sinkhorn_scaling"](
        K, a, b, tol, max_iter, check_every
    )


def sinkhorn_log(C, loga, logb, eps, tol, max_iter, check_every=10):
    """Log-domain stabilized Sinkhorn; returns potentials (f, g, err, it)."""
    return IMPLEMENTATIONS[_BACKEND]["sinkhorn_log"](
        C, loga, logb, eps, tol, max_iter, check_every
    )


def assign_nearest(X: np.ndarray, centroids: np.ndarray):
    """Nearest-centroid labels and squared distances; ties -> lowest index."""
    return IMPLEMENTATIONS[_BACKEND]["assign_nearest"](X, centroids)
