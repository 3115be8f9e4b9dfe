"""K-Means baseline and clustering evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .alignment import ClusterAssignment, solve_assignment
from .kernels import assign_nearest


class KMeansResult(NamedTuple):
    centroids: np.ndarray
    assignment: ClusterAssignment
    inertia: float


def _lloyd(X: np.ndarray, centroids: np.ndarray, max_iter: int):
    """One Lloyd run from given centroids; returns trace of inertia values.

    Empty clusters are re-seeded to the point currently farthest from its
    assigned centroid; such clusters contributed nothing to the inertia, so
    the trace stays non-increasing.
    """
    k = centroids.shape[0]
    centroids = centroids.copy()
    prev_labels = None
    trace = []
    labels = None
    dists = None
    for _ in range(max_iter):
        labels, dists = assign_nearest(X, centroids)
        trace.append(float(dists.sum()))
        if prev_labels is not None and np.array_equal(labels, prev_labels):
            break
        prev_labels = labels
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, X)
        nonempty = counts > 0
        centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        empties = np.flatnonzero(~nonempty)
        if empties.size:
            order = np.argsort(-dists, kind="stable")
            for c, p in zip(empties, order[: empties.size]):
                centroids[c] = X[p]
    return centroids, labels, float(dists.sum()), trace


def kmeans(
    features,
    k: int,
    seed: int = 0,
    max_iter: int = 100,
    n_restarts: int = 10,
) -> KMeansResult:
    """Lloyd's algorithm from random-point initialization, best of restarts."""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {X.shape}")
    n = X.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"k={k} must lie in [1, {n}]")
    if n_restarts < 1:
        raise ValueError("n_restarts must be >= 1")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_restarts):
        init = X[rng.choice(n, size=k, replace=False)]
        centroids, labels, inertia, _ = _lloyd(X, init, max_iter)
        if best is None or inertia < best[2]:
            best = (centroids, labels, inertia)
    centroids, labels, inertia = best
    return KMeansResult(centroids, ClusterAssignment(labels, k), inertia)


def _labels_of(x) -> np.ndarray:
    if isinstance(x, ClusterAssignment):
        return x.labels
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise ValueError("labelings must be 1-D integer vectors")
    return arr.astype(np.int64)


def adjusted_rand_index(a, b) -> float:
    """Hubert-Arabie adjusted Rand index between two labelings.

    Computed from the pair-counting contingency table with exact integer
    arithmetic; permutation-invariant in both arguments.
    """
    la, lb = _labels_of(a), _labels_of(b)
    if la.size != lb.size:
        raise ValueError(f"labelings have lengths {la.size} != {lb.size}")
    n = la.size
    _, ia = np.unique(la, return_inverse=True)
    _, ib = np.unique(lb, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)

    def comb2(x):
        return int(np.sum(x.astype(object) * (x.astype(object) - 1) // 2))

    sum_ij = comb2(table)
    sum_a = comb2(table.sum(axis=1))
    sum_b = comb2(table.sum(axis=0))
    total = n * (n - 1) // 2
    # ari = (sum_ij - sum_a*sum_b/total) / ((sum_a+sum_b)/2 - sum_a*sum_b/total)
    num = 2 * (sum_ij * total - sum_a * sum_b)
    den = total * (sum_a + sum_b) - 2 * sum_a * sum_b
    if den == 0:
        return 1.0
    return num / den


def clustering_accuracy(pred, truth) -> float:
    """Unsupervised accuracy: best one-to-one label matching, then agreement."""
    lp, lt = _labels_of(pred), _labels_of(truth)
    if lp.size != lt.size:
        raise ValueError(f"labelings have lengths {lp.size} != {lt.size}")
    kp = int(lp.max()) + 1
    kt = int(lt.max()) + 1
    if isinstance(pred, ClusterAssignment):
        kp = max(kp, pred.n_clusters)
    if isinstance(truth, ClusterAssignment):
        kt = max(kt, truth.n_clusters)
    size = max(kp, kt)
    confusion = np.zeros((size, size), dtype=np.int64)
    np.add.at(confusion, (lp, lt), 1)
    mapping = solve_assignment(-confusion.astype(np.float64))
    matched = int(confusion[np.arange(size), mapping].sum())
    return matched / lp.size


@dataclass
class DomainScore:
    ari: float
    accuracy: float
    n_points: int

    def __post_init__(self):
        if not (-1.0 - 1e-12 <= self.ari <= 1.0 + 1e-12):
            raise ValueError(f"ari {self.ari} outside [-1, 1]")
        if not (0.0 <= self.accuracy <= 1.0):
            raise ValueError(f"accuracy {self.accuracy} outside [0, 1]")


@dataclass
class EvalReport:
    per_domain: dict[str, DomainScore]
    aggregate: DomainScore

    def to_csv(self) -> str:
        lines = ["domain,n_points,ari,accuracy"]
        for name in self.per_domain:
            s = self.per_domain[name]
            lines.append(f"{name},{s.n_points},{s.ari:.17g},{s.accuracy:.17g}")
        a = self.aggregate
        lines.append(f"aggregate,{a.n_points},{a.ari:.17g},{a.accuracy:.17g}")
        return "\n".join(lines) + "\n"


def evaluate(predictions: dict, truths: dict) -> EvalReport:
    """Per-domain ARI and matched accuracy plus unweighted averages.

    `truths` values may be label arrays or objects with a `truth_labels`
    attribute (e.g. loaded datasets).
    """
    if not predictions:
        raise ValueError("no domains to evaluate")
    per_domain = {}
    for name, pred in predictions.items():
        if name not in truths:
            raise ValueError(f"domain {name!r} has no ground-truth labels")
        raw = truths[name]
        truth = getattr(raw, "truth_labels", raw)
        if truth is None:
            raise ValueError(f"domain {name!r} has no ground-truth labels")
        lp = _labels_of(pred)
        per_domain[name] = DomainScore(
            ari=adjusted_rand_index(pred, truth),
            accuracy=clustering_accuracy(pred, truth),
            n_points=int(lp.size),
        )
    scores = list(per_domain.values())
    aggregate = DomainScore(
        ari=float(np.mean([s.ari for s in scores])),
        accuracy=float(np.mean([s.accuracy for s in scores])),
        n_points=int(sum(s.n_points for s in scores)),
    )
    return EvalReport(per_domain, aggregate)
