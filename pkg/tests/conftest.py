import itertools

import numpy as np
import pytest

from udadil.ot import DiscreteDistribution


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def brute_force_uniform_ot(C: np.ndarray) -> float:
    """Minimum mean cost over all permutation couplings (uniform, n == m)."""
    n = C.shape[0]
    assert C.shape == (n, n)
    best = np.inf
    for perm in itertools.permutations(range(n)):
        total = float(np.sum(C[np.arange(n), perm]))
        if total < best:
            best = total
    return best / n


def brute_force_assignment(C: np.ndarray):
    """Exhaustive minimum-cost permutation; returns (mapping, cost)."""
    n = C.shape[0]
    best_perm, best_cost = None, np.inf
    for perm in itertools.permutations(range(n)):
        total = float(np.sum(C[np.arange(n), list(perm)]))
        if total < best_cost:
            best_cost, best_perm = total, perm
    return np.asarray(best_perm), best_cost


def make_blobs(rng, centers, points_per_blob, sigma=0.3):
    """Gaussian blobs around the given centers; returns (X, labels)."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    chunks = [
        c + sigma * rng.normal(size=(points_per_blob, centers.shape[1]))
        for c in centers
    ]
    X = np.concatenate(chunks)
    labels = np.repeat(np.arange(centers.shape[0]), points_per_blob)
    return X, labels


def cloud(points) -> DiscreteDistribution:
    return DiscreteDistribution.uniform(np.atleast_2d(np.asarray(points, dtype=float)))
