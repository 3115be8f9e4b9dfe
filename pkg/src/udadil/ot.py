"""Discrete optimal transport: point clouds, exact and entropic solvers.

Distances here are always raw optimal-transport costs under the squared
Euclidean ground cost, i.e. squared 2-Wasserstein values; no square root is
ever taken.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog

from .errors import SolverError
from .kernels import pairwise_sqdist, sinkhorn_log, sinkhorn_scaling

SIMPLEX_ATOL = 1e-9

# Entropic regularization below this fraction of mean(C) underflows the
# plain scaling loop; the log-domain path is selected automatically.
LOG_DOMAIN_THRESHOLD = 0.05


def _as_float_matrix(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def check_simplex(w, name: str = "weights", atol: float = SIMPLEX_ATOL) -> np.ndarray:
    """Validate a probability vector: non-negative, sums to 1 within atol."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D vector")
    if not np.all(np.isfinite(w)):
        raise ValueError(f"{name} contains non-finite entries")
    if np.any(w < 0):
        raise ValueError(f"{name} has negative entries (min {w.min()})")
    total = w.sum()
    if abs(total - 1.0) > atol:
        raise ValueError(f"{name} sums to {total}, expected 1 within {atol}")
    return w


@dataclass(frozen=True)
class DiscreteDistribution:
    """A weighted point cloud: support (n, d) plus a probability vector (n,)."""

    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        support = _as_float_matrix(self.support, "support")
        if support.shape[0] < 1 or support.shape[1] < 1:
            raise ValueError(f"support must be at least 1x1, got {support.shape}")
        if not np.all(np.isfinite(support)):
            raise ValueError("support contains NaN/Inf entries")
        weights = check_simplex(self.weights, "weights")
        if weights.shape[0] != support.shape[0]:
            raise ValueError(
                f"{weights.shape[0]} weights for {support.shape[0]} points"
            )
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, support) -> "DiscreteDistribution":
        support = _as_float_matrix(support, "support")
        n = support.shape[0]
        return cls(support, np.full(n, 1.0 / n))

    @property
    def n_points(self) -> int:
        return self.support.shape[0]

    @property
    def dim(self) -> int:
        return self.support.shape[1]


@dataclass(frozen=True)
class TransportPlan:
    """A coupling matrix together with the marginals it was solved against."""

    coupling: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray
    marginal_error: float = field(default=0.0, compare=False)

    def __post_init__(self):
        coupling = _as_float_matrix(self.coupling, "coupling")
        row = np.asarray(self.row_marginal, dtype=np.float64)
        col = np.asarray(self.col_marginal, dtype=np.float64)
        if coupling.shape != (row.size, col.size):
            raise ValueError(
                f"coupling shape {coupling.shape} vs marginals "
                f"({row.size}, {col.size})"
            )
        if not np.all(np.isfinite(coupling)):
            raise ValueError("coupling contains non-finite entries")
        if np.any(coupling < 0):
            raise ValueError("coupling has negative entries")
        if abs(coupling.sum() - 1.0) > SIMPLEX_ATOL:
            raise ValueError(f"coupling mass {coupling.sum()} != 1")
        object.__setattr__(self, "coupling", coupling)
        object.__setattr__(self, "row_marginal", row)
        object.__setattr__(self, "col_marginal", col)

    def max_marginal_violation(self) -> float:
        return max(
            np.abs(self.coupling.sum(axis=1) - self.row_marginal).max(),
            np.abs(self.coupling.sum(axis=0) - self.col_marginal).max(),
        )

    def cost(self, C: np.ndarray) -> float:
        """Frobenius inner product <C, coupling>."""
        return float(np.sum(C * self.coupling))


def squared_euclidean_cost(
    A: DiscreteDistribution, B: DiscreteDistribution
) -> np.ndarray:
    """Ground cost matrix: entries[i, j] = ||A_i - B_j||^2."""
    if A.dim != B.dim:
        raise ValueError(
            f"feature dimensions differ: first has d={A.dim}, second d={B.dim}"
        )
    return pairwise_sqdist(A.support, B.support)


def _is_uniform(w: np.ndarray) -> bool:
    return bool(np.all(np.abs(w - 1.0 / w.size) <= 1e-12))


def _solve_lp(C: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n, m = C.shape
    rows = np.concatenate([np.repeat(np.arange(n), m), n + np.tile(np.arange(m), n)])
    cols = np.concatenate([np.arange(n * m), np.arange(n * m)])
    A_eq = sparse.csr_matrix(
        (np.ones(2 * n * m), (rows, cols)), shape=(n + m, n * m)
    )
    res = linprog(
        C.ravel(),
        A_eq=A_eq,
        b_eq=np.concatenate([a, b]),
        bounds=(0, None),
        method="highs",
    )
    if res.status != 0:
        raise SolverError(
            f"exact OT linear program failed (status {res.status}, "
            f"{res.nit} iterations): {res.message}"
        )
    return res.x.reshape(n, m)


def solve_exact_ot(C, a, b) -> TransportPlan:
    """Minimize <C, pi> over couplings with marginals (a, b), exactly.

    Uniform same-size marginals reduce to an assignment problem (an optimal
    vertex of the Birkhoff polytope is a permutation) and are solved that
    way; everything else goes through an exact LP solve.
    """
    C = _as_float_matrix(C, "cost matrix")
    a = check_simplex(a, "row marginal")
    b = check_simplex(b, "column marginal")
    n, m = C.shape
    if a.size != n or b.size != m:
        raise ValueError(
            f"marginal sizes ({a.size}, {b.size}) do not match cost shape {C.shape}"
        )
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix contains non-finite entries")

    if n == m and _is_uniform(a) and _is_uniform(b):
        ri, ci = linear_sum_assignment(C)
        coupling = np.zeros((n, m))
        coupling[ri, ci] = 1.0 / n
    else:
        coupling = _solve_lp(C, a, b)

    err = max(
        np.abs(coupling.sum(axis=1) - a).max(),
        np.abs(coupling.sum(axis=0) - b).max(),
    )
    if err > 1e-9:
        raise SolverError(f"exact plan violates marginals by {err:.3e} (> 1e-9)")
    return TransportPlan(coupling, a, b, marginal_error=float(err))


def solve_sinkhorn(
    C,
    a,
    b,
    epsilon: float | None = None,
    tol: float = 1e-6,
    max_iter: int = 1000,
    method: str = "auto",
) -> TransportPlan:
    """Entropic-regularized transport plan via Sinkhorn matrix scaling.

    ``epsilon=None`` uses 0.1 * mean(C).  ``method`` is one of ``auto``
    (log-domain when epsilon < 0.05 * mean(C)), ``scaling`` or ``log``.
    The plain scaling loop raises on numerical underflow and points at the
    log-domain path.
    """
    C = _as_float_matrix(C, "cost matrix")
    a = check_simplex(a, "row marginal")
    b = check_simplex(b, "column marginal")
    if a.size != C.shape[0] or b.size != C.shape[1]:
        raise ValueError(
            f"marginal sizes ({a.size}, {b.size}) do not match cost shape {C.shape}"
        )
    mean_cost = float(C.mean())
    if epsilon is None:
        epsilon = 0.1 * mean_cost if mean_cost > 0 else 1.0
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if method not in ("auto", "scaling", "log"):
        raise ValueError(f"unknown sinkhorn method {method!r}")

    use_log = method == "log" or (
        method == "auto" and epsilon < LOG_DOMAIN_THRESHOLD * mean_cost
    )

    if not use_log:
        K = np.exp(-C / epsilon)
        u, v, err, it, ok = sinkhorn_scaling(K, a, b, tol, max_iter)
        if ok:
            coupling = u[:, None] * K * v[None, :]
            err = max(
                np.abs(coupling.sum(axis=1) - a).max(),
                np.abs(coupling.sum(axis=0) - b).max(),
            )
            return TransportPlan(coupling, a, b, marginal_error=float(err))
        if method == "scaling":
            raise SolverError(
                f"Sinkhorn scaling underflowed at iteration {it} with "
                f"epsilon={epsilon:.3e}; use the log-domain stabilization "
                "path (method='log' or 'auto')"
            )
        # auto mode: retry stabilized

    with np.errstate(divide="ignore"):  # zero weights are legal
        loga = np.log(a)
        logb = np.log(b)
    f, g, err, _ = sinkhorn_log(C, loga, logb, epsilon, tol, max_iter)
    coupling = np.exp((f[:, None] + g[None, :] - C) / epsilon)
    err = max(
        np.abs(coupling.sum(axis=1) - a).max(),
        np.abs(coupling.sum(axis=0) - b).max(),
    )
    return TransportPlan(coupling, a, b, marginal_error=float(err))


def wasserstein_distance(
    P: DiscreteDistribution,
    Q: DiscreteDistribution,
    method: str = "exact",
    epsilon: float | None = None,
    tol: float = 1e-6,
    max_iter: int = 1000,
) -> float:
    """Squared 2-Wasserstein cost <C, pi*> between two point clouds."""
    C = squared_euclidean_cost(P, Q)
    if method == "exact":
        plan = solve_exact_ot(C, P.weights, Q.weights)
    elif method == "entropic":
        plan = solve_sinkhorn(C, P.weights, Q.weights, epsilon, tol, max_iter)
    else:
        raise ValueError(f"unknown method {method!r}; use 'exact' or 'entropic'")
    return plan.cost(C)


def barycentric_map(plan: TransportPlan, target_support) -> np.ndarray:
    """Displace each source point to the plan-weighted mean of its targets.

    Row i of the output is sum_j pi_ij * y_j / sum_j pi_ij.  Rows are
    normalized before the product so a permutation coupling reproduces the
    target support bit-for-bit.
    """
    Y = _as_float_matrix(target_support, "target_support")
    coupling = plan.coupling
    if coupling.shape[1] != Y.shape[0]:
        raise ValueError(
            f"plan has {coupling.shape[1]} columns but target has "
            f"{Y.shape[0]} points"
        )
    row_sums = coupling.sum(axis=1)
    dead = np.flatnonzero(row_sums == 0)
    if dead.size:
        raise SolverError(
            f"transport plan row {dead[0]} carries no mass; source point "
            f"{dead[0]} cannot be mapped"
        )
    return (coupling / row_sums[:, None]) @ Y
