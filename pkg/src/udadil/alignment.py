"""Cross-domain cluster correspondence.

Clusters from two domains are matched by solving the assignment problem
over their pairwise exact Wasserstein costs; relabeling every domain
against a common reference makes pseudo-label indices comparable across
domains.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .ot import DiscreteDistribution, wasserstein_distance

# Greedy lexicographic tie-breaking costs O(n^2) assignment re-solves; above
# this size we fall back to the (still deterministic) plain solver output.
_LEX_TIEBREAK_MAX_N = 64

_SUBSAMPLE_CAP = 500


@dataclass(frozen=True)
class ClusterAssignment:
    """Hard cluster labels for one domain: values in [0, n_clusters)."""

    labels: np.ndarray
    n_clusters: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 1 or labels.size == 0:
            raise ValueError("labels must be a non-empty 1-D integer vector")
        if self.n_clusters < 1:
            raise ValueError("n_clusters must be >= 1")
        if labels.min() < 0 or labels.max() >= self.n_clusters:
            raise ValueError(
                f"labels must lie in [0, {self.n_clusters}), got "
                f"[{labels.min()}, {labels.max()}]"
            )
        object.__setattr__(self, "labels", labels)

    def relabeled(self, new_labels: np.ndarray) -> "ClusterAssignment":
        return ClusterAssignment(new_labels, self.n_clusters)


def _subcloud(
    dist: DiscreteDistribution, labels: np.ndarray, cluster: int, which: str,
    cap: int, rng,
) -> DiscreteDistribution:
    idx = np.flatnonzero(labels == cluster)
    if idx.size == 0:
        raise ValueError(f"cluster {cluster} of domain {which} is empty")
    if idx.size > cap:
        idx = rng.choice(idx, size=cap, replace=False)
    return DiscreteDistribution.uniform(dist.support[idx])


def cluster_cost_matrix(
    A: DiscreteDistribution,
    labels_A: ClusterAssignment,
    B: DiscreteDistribution,
    labels_B: ClusterAssignment,
    subsample_cap: int = _SUBSAMPLE_CAP,
    seed: int = 0,
) -> np.ndarray:
    """entries[i, j] = exact W cost between cluster i of A and cluster j of B.

    Clusters larger than `subsample_cap` points are subsampled (seeded)
    before the pairwise solve.
    """
    if labels_A.n_clusters != labels_B.n_clusters:
        raise ValueError(
            f"cluster counts differ: {labels_A.n_clusters} vs "
            f"{labels_B.n_clusters} (equal counts are required)"
        )
    n = labels_A.n_clusters
    rng = np.random.default_rng(seed)
    subs_a = [
        _subcloud(A, labels_A.labels, i, "A", subsample_cap, rng) for i in range(n)
    ]
    subs_b = [
        _subcloud(B, labels_B.labels, j, "B", subsample_cap, rng) for j in range(n)
    ]
    C = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            C[i, j] = wasserstein_distance(subs_a[i], subs_b[j], method="exact")
    return C


def _perm_cost(C: np.ndarray, mapping: np.ndarray) -> float:
    return float(np.sum(C[np.arange(C.shape[0]), mapping]))


def solve_assignment(C: np.ndarray) -> np.ndarray:
    """Minimum-cost perfect matching on a square cost matrix.

    Returns `mapping` with row i assigned to column mapping[i].  Among
    optimal solutions the lexicographically smallest mapping is returned
    (for n <= 64; beyond that, the solver's deterministic output).
    """
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError(f"cost matrix must be square, got shape {C.shape}")
    if np.isnan(C).any():
        raise ValueError("cost matrix contains NaN entries")
    n = C.shape[0]
    rows, cols = linear_sum_assignment(C)
    mapping = np.empty(n, dtype=np.int64)
    mapping[rows] = cols
    if n > _LEX_TIEBREAK_MAX_N:
        return mapping

    best = _perm_cost(C, mapping)
    tol = 1e-12 * max(1.0, abs(best))
    chosen = np.empty(n, dtype=np.int64)
    available = list(range(n))
    prefix = 0.0
    for i in range(n):
        rest_rows = np.arange(i + 1, n)
        for j in available:
            remaining = [c for c in available if c != j]
            sub_cost = 0.0
            if rest_rows.size:
                sub = C[np.ix_(rest_rows, remaining)]
                rr, cc = linear_sum_assignment(sub)
                sub_cost = float(np.sum(sub[rr, cc]))
            if prefix + C[i, j] + sub_cost <= best + tol:
                chosen[i] = j
                prefix += C[i, j]
                available.remove(j)
                break
        else:  # numerically pathological; keep the solver's answer
            return mapping
    return chosen


def align_to_reference(
    reference: tuple[DiscreteDistribution, ClusterAssignment],
    others: list[tuple[DiscreteDistribution, ClusterAssignment]],
    subsample_cap: int = _SUBSAMPLE_CAP,
    seed: int = 0,
) -> list[ClusterAssignment]:
    """Relabel each domain so its cluster ids match the reference's.

    In the output for each domain, label L means "matched to reference
    cluster L".  The reference's own labeling is the fixed convention and
    is never altered.
    """
    ref_dist, ref_assign = reference
    out = []
    for dist, assign in others:
        if assign.n_clusters != ref_assign.n_clusters:
            raise ValueError(
                f"domain has {assign.n_clusters} clusters, reference has "
                f"{ref_assign.n_clusters}"
            )
        M = cluster_cost_matrix(
            ref_dist, ref_assign, dist, assign, subsample_cap, seed
        )
        mapping = solve_assignment(M)  # reference cluster i -> other cluster mapping[i]
        inverse = np.empty_like(mapping)
        inverse[mapping] = np.arange(mapping.size)
        out.append(assign.relabeled(inverse[assign.labels]))
    return out
