"""Free-support Wasserstein barycenters, unlabeled and label-aware.

The solver is the classical fixed-point scheme: alternately solve exact OT
from the current support to every family member, then move each support
point to the weight-combined barycentric-map image.  Both steps minimize
the same objective, so the reported trace is non-increasing.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .kernels import pairwise_sqdist
from .ot import (
    DiscreteDistribution,
    barycentric_map,
    check_simplex,
    solve_exact_ot,
)


@dataclass(frozen=True)
class LabeledDistribution:
    """A point cloud whose support points carry integer class labels."""

    base: DiscreteDistribution
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 1 or labels.size != self.base.n_points:
            raise ValueError(
                f"{labels.size} labels for {self.base.n_points} support points"
            )
        if self.n_classes < 1:
            raise ValueError("n_classes must be >= 1")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise ValueError(
                f"labels must lie in [0, {self.n_classes}), "
                f"got range [{labels.min()}, {labels.max()}]"
            )
        present = np.bincount(labels, minlength=self.n_classes)
        empty = np.flatnonzero(present == 0)
        if empty.size:
            warnings.warn(
                f"classes {empty.tolist()} have no support points",
                stacklevel=2,
            )
        object.__setattr__(self, "labels", labels)

    @classmethod
    def uniform(cls, support, labels, n_classes) -> "LabeledDistribution":
        return cls(DiscreteDistribution.uniform(support), labels, n_classes)

    @property
    def support(self) -> np.ndarray:
        return self.base.support

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)


@dataclass
class BarycenterResult:
    distribution: DiscreteDistribution
    objective: float
    objective_trace: list[float]
    n_iter: int
    converged: bool


@dataclass
class LabeledBarycenterResult:
    distribution: LabeledDistribution
    objective: float
    objective_trace: list[float]
    n_iter: int
    converged: bool


def label_penalty_cost(XA, labels_a, XB, labels_b, beta: float) -> np.ndarray:
    """Squared Euclidean cost plus beta where labels disagree."""
    if beta < 0:
        raise ValueError(f"label penalty beta must be >= 0, got {beta}")
    C = pairwise_sqdist(np.asarray(XA, float), np.asarray(XB, float))
    if beta > 0:
        la = np.asarray(labels_a).reshape(-1, 1)
        lb = np.asarray(labels_b).reshape(1, -1)
        C = C + beta * (la != lb)
    return C


def default_label_penalty(features: np.ndarray, cap: int = 2000, seed: int = 0) -> float:
    """10x the 95th percentile of pairwise feature costs (subsampled)."""
    X = np.asarray(features, dtype=np.float64)
    if X.shape[0] > cap:
        idx = np.random.default_rng(seed).choice(X.shape[0], cap, replace=False)
        X = X[idx]
    D = pairwise_sqdist(X, X)
    return float(10.0 * np.percentile(D, 95))


def largest_remainder(fractions, total: int) -> np.ndarray:
    """Round non-negative fractions to integers summing exactly to total."""
    f = np.asarray(fractions, dtype=np.float64)
    if np.any(f < 0) or f.sum() <= 0:
        raise ValueError("fractions must be non-negative with positive sum")
    ideal = f / f.sum() * total
    counts = np.floor(ideal).astype(np.int64)
    short = total - counts.sum()
    order = np.argsort(-(ideal - counts), kind="stable")
    counts[order[:short]] += 1
    return counts


def class_quotas(fractions, total: int, min_one: bool = True) -> np.ndarray:
    """Largest-remainder rounding with every class kept non-empty."""
    counts = largest_remainder(fractions, total)
    if min_one:
        if total < counts.size:
            raise ValueError(
                f"cannot give {counts.size} classes at least one of {total} slots"
            )
        while np.any(counts == 0):
            counts[int(np.flatnonzero(counts == 0)[0])] = 1
            counts[int(np.argmax(counts))] -= 1
    return counts


def _pooled_subset_init(family, alpha, n_support, rng) -> np.ndarray:
    supports = np.concatenate([P.support for P in family], axis=0)
    probs = np.concatenate(
        [a * P.weights for a, P in zip(alpha, family)], axis=0
    )
    if n_support > supports.shape[0]:
        raise ValueError(
            f"n_support={n_support} exceeds the {supports.shape[0]} pooled points"
        )
    probs = probs / probs.sum()
    available = int(np.count_nonzero(probs))
    if n_support > available:
        raise ValueError(
            f"n_support={n_support} exceeds the {available} pooled points with "
            "positive selection probability"
        )
    idx = rng.choice(supports.shape[0], size=n_support, replace=False, p=probs)
    return supports[idx].copy()


def _check_family(family, alpha):
    if not family:
        raise ValueError("family must contain at least one distribution")
    alpha = check_simplex(alpha, "alpha")
    if alpha.size != len(family):
        raise ValueError(f"{alpha.size} weights for {len(family)} distributions")
    d = family[0].support.shape[1]
    for k, P in enumerate(family):
        if P.support.shape[1] != d:
            raise ValueError(
                f"family member {k} has dimension {P.support.shape[1]}, expected {d}"
            )
    return alpha


def free_support_barycenter(
    family: list[DiscreteDistribution],
    alpha,
    n_support: int,
    init="random_subset",
    tol: float = 1e-5,
    max_iter: int = 100,
    seed: int = 0,
) -> BarycenterResult:
    """Uniform-weight barycenter of `family` under weights `alpha`.

    `init` is either "random_subset" (a seeded alpha-weighted sample of the
    pooled supports) or an explicit (n_support, d) matrix.
    """
    alpha = _check_family(family, alpha)
    if n_support < 1:
        raise ValueError("n_support must be >= 1")
    rng = np.random.default_rng(seed)
    if isinstance(init, str):
        if init != "random_subset":
            raise ValueError(f"unknown init {init!r}")
        X = _pooled_subset_init(family, alpha, n_support, rng)
    else:
        X = np.array(init, dtype=np.float64)
        if X.shape != (n_support, family[0].support.shape[1]):
            raise ValueError(
                f"provided init has shape {X.shape}, expected "
                f"({n_support}, {family[0].support.shape[1]})"
            )

    a = np.full(n_support, 1.0 / n_support)
    trace: list[float] = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        objective = 0.0
        mapped = np.zeros_like(X)
        for k, P in enumerate(family):
            C = pairwise_sqdist(X, P.support)
            plan = solve_exact_ot(C, a, P.weights)
            objective += alpha[k] * plan.cost(C)
            mapped += alpha[k] * barycentric_map(plan, P.support)
        trace.append(objective)
        displacement = np.linalg.norm(mapped - X, axis=1).max()
        X = mapped
        if displacement < tol:
            converged = True
            break

    final = 0.0
    for k, P in enumerate(family):
        C = pairwise_sqdist(X, P.support)
        final += alpha[k] * solve_exact_ot(C, a, P.weights).cost(C)
    trace.append(final)
    return BarycenterResult(
        DiscreteDistribution(X, a), final, trace, it, converged
    )


def labeled_barycenter(
    family: list[LabeledDistribution],
    alpha,
    n_support: int,
    beta: float | None = None,
    init="stratified_subset",
    tol: float = 1e-5,
    max_iter: int = 100,
    seed: int = 0,
) -> LabeledBarycenterResult:
    """Label-aware barycenter: OT uses the label-penalized ground cost.

    Support labels are fixed at initialization, with per-class counts given
    by largest-remainder rounding of the alpha-averaged class frequencies.
    """
    alpha = _check_family(family, alpha)
    n_classes = family[0].n_classes
    for k, P in enumerate(family):
        if P.n_classes != n_classes:
            raise ValueError(
                f"family member {k} has n_classes={P.n_classes}, expected {n_classes}"
            )
    if n_support < n_classes:
        raise ValueError(
            f"n_support={n_support} < n_classes={n_classes}: every class "
            "needs at least one prototype"
        )
    if beta is None:
        beta = default_label_penalty(
            np.concatenate([P.support for P in family], axis=0), seed=seed
        )

    rng = np.random.default_rng(seed)
    freqs = np.zeros(n_classes)
    for a_k, P in zip(alpha, family):
        freqs += a_k * P.class_counts() / P.base.n_points
    quotas = class_quotas(freqs, n_support)

    if isinstance(init, str):
        if init != "stratified_subset":
            raise ValueError(f"unknown init {init!r}")
        chunks = []
        for c in range(n_classes):
            pool = []
            probs = []
            for a_k, P in zip(alpha, family):
                mask = P.labels == c
                pool.append(P.support[mask])
                probs.append(a_k * P.base.weights[mask])
            pool = np.concatenate(pool, axis=0)
            probs = np.concatenate(probs)
            available = int(np.count_nonzero(probs))
            if available < quotas[c]:
                raise ValueError(
                    f"class {c} needs {quotas[c]} init points but only "
                    f"{available} are available in the weighted pool"
                )
            idx = rng.choice(
                pool.shape[0], size=quotas[c], replace=False, p=probs / probs.sum()
            )
            chunks.append(pool[idx])
        X = np.concatenate(chunks, axis=0)
        labels = np.repeat(np.arange(n_classes), quotas)
    else:
        X, labels = init
        X = np.array(X, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if X.shape[0] != n_support or labels.size != n_support:
            raise ValueError("provided init size does not match n_support")

    a = np.full(n_support, 1.0 / n_support)
    trace: list[float] = []
    converged = False
    it = 0

    def _terms(X):
        costs, plans = [], []
        for P in family:
            C = label_penalty_cost(X, labels, P.support, P.labels, beta)
            plans.append(solve_exact_ot(C, a, P.base.weights))
            costs.append(C)
        return costs, plans

    for it in range(1, max_iter + 1):
        costs, plans = _terms(X)
        objective = sum(
            alpha[k] * plans[k].cost(costs[k]) for k in range(len(family))
        )
        trace.append(float(objective))
        mapped = np.zeros_like(X)
        for k, P in enumerate(family):
            mapped += alpha[k] * barycentric_map(plans[k], P.support)
        displacement = np.linalg.norm(mapped - X, axis=1).max()
        X = mapped
        if displacement < tol:
            converged = True
            break

    costs, plans = _terms(X)
    final = float(
        sum(alpha[k] * plans[k].cost(costs[k]) for k in range(len(family)))
    )
    trace.append(final)
    dist = LabeledDistribution.uniform(X, labels, n_classes)
    return LabeledBarycenterResult(dist, final, trace, it, converged)
