import numpy as np
import pytest

from udadil.alignment import (
    ClusterAssignment,
    align_to_reference,
    cluster_cost_matrix,
    solve_assignment,
)
from udadil.ot import DiscreteDistribution

from conftest import brute_force_assignment, make_blobs


def assignment(labels, n):
    return ClusterAssignment(np.asarray(labels), n)


class TestClusterCostMatrix:
    def test_self_cost_zero_diagonal(self, rng):
        X, y = make_blobs(rng, [[0.0], [8.0], [20.0]], 10)
        A = DiscreteDistribution.uniform(X)
        la = assignment(y, 3)
        C = cluster_cost_matrix(A, la, A, la)
        np.testing.assert_allclose(np.diag(C), 0.0, atol=1e-12)

    def test_dirac_pair_arithmetic(self):
        A = DiscreteDistribution.uniform([[0.0], [10.0]])
        B = DiscreteDistribution.uniform([[1.0], [11.0]])
        C = cluster_cost_matrix(
            A, assignment([0, 1], 2), B, assignment([0, 1], 2)
        )
        np.testing.assert_allclose(C, [[1.0, 121.0], [81.0, 1.0]])

    def test_single_cluster_is_plain_distance(self, rng):
        from udadil.ot import wasserstein_distance

        A = DiscreteDistribution.uniform(rng.normal(size=(6, 2)))
        B = DiscreteDistribution.uniform(rng.normal(size=(7, 2)) + 1.0)
        C = cluster_cost_matrix(
            A, assignment(np.zeros(6, int), 1), B, assignment(np.zeros(7, int), 1)
        )
        assert C.shape == (1, 1)
        assert C[0, 0] == pytest.approx(wasserstein_distance(A, B), abs=1e-12)

    def test_empty_cluster_named(self):
        A = DiscreteDistribution.uniform([[0.0], [1.0]])
        with pytest.raises(ValueError, match="cluster 1 of domain A"):
            cluster_cost_matrix(
                A, assignment([0, 0], 2), A, assignment([0, 1], 2)
            )

    def test_subsampling_keeps_costs_close(self, rng):
        X, y = make_blobs(rng, [[0.0, 0.0], [12.0, 0.0]], 300, sigma=0.5)
        A = DiscreteDistribution.uniform(X)
        la = assignment(y, 2)
        full = cluster_cost_matrix(A, la, A, la, subsample_cap=500)
        capped = cluster_cost_matrix(A, la, A, la, subsample_cap=100, seed=1)
        assert np.abs(full - capped).max() < 0.05 * full.max()


class TestSolveAssignment:
    def test_identity_dominant(self):
        mapping = solve_assignment([[0.0, 9.0], [9.0, 0.0]])
        np.testing.assert_array_equal(mapping, [0, 1])

    def test_two_by_two_derived(self):
        C = np.array([[1.0, 121.0], [81.0, 1.0]])
        mapping = solve_assignment(C)
        np.testing.assert_array_equal(mapping, [0, 1])
        assert C[[0, 1], mapping].sum() == 2.0

    def test_matches_brute_force_five_by_five(self, rng):
        for _ in range(10):
            C = rng.random((5, 5))
            mapping = solve_assignment(C)
            expected_map, expected_cost = brute_force_assignment(C)
            assert float(C[np.arange(5), mapping].sum()) == expected_cost
            np.testing.assert_array_equal(mapping, expected_map)

    def test_bijection_property(self, rng):
        for n in (1, 2, 4, 7):
            mapping = solve_assignment(rng.random((n, n)))
            np.testing.assert_array_equal(np.sort(mapping), np.arange(n))

    def test_lexicographic_tie_break(self):
        # all-zero costs: every permutation optimal; identity is smallest
        mapping = solve_assignment(np.zeros((4, 4)))
        np.testing.assert_array_equal(mapping, [0, 1, 2, 3])
        # two optimal solutions; [1, 0, 2] beats [2, 0, 1] lexicographically
        C = np.array([[5.0, 1.0, 1.0], [1.0, 5.0, 5.0], [5.0, 5.0, 1.0]])
        np.testing.assert_array_equal(solve_assignment(C), [1, 0, 2])

    def test_non_square_rejected(self):
        with pytest.raises(ValueError, match="square"):
            solve_assignment(np.zeros((2, 3)))

    def test_nan_rejected(self):
        with pytest.raises(ValueError, match="NaN"):
            solve_assignment(np.array([[np.nan, 0.0], [0.0, 1.0]]))


class TestAlignToReference:
    def test_copy_of_reference_unchanged(self, rng):
        X, y = make_blobs(rng, [[0.0, 0.0], [6.0, 6.0], [12.0, 0.0]], 15)
        ref = (DiscreteDistribution.uniform(X), assignment(y, 3))
        [aligned] = align_to_reference(ref, [ref])
        np.testing.assert_array_equal(aligned.labels, y)

    def test_swapped_labels_recovered(self):
        X = np.array([[0.0], [0.1], [10.0], [10.1]])
        ref = (DiscreteDistribution.uniform(X), assignment([0, 0, 1, 1], 2))
        other = (DiscreteDistribution.uniform(X + 0.5), assignment([1, 1, 0, 0], 2))
        [aligned] = align_to_reference(ref, [other])
        np.testing.assert_array_equal(aligned.labels, [0, 0, 1, 1])

    def test_single_cluster_no_op(self, rng):
        X = rng.normal(size=(5, 2))
        ref = (DiscreteDistribution.uniform(X), assignment(np.zeros(5, int), 1))
        [aligned] = align_to_reference(ref, [ref])
        np.testing.assert_array_equal(aligned.labels, 0)

    def test_involution_on_permuted_copy(self, rng):
        X, y = make_blobs(rng, [[0.0, 0.0], [7.0, 0.0], [0.0, 7.0], [7.0, 7.0]], 10)
        perm = np.array([2, 3, 1, 0])
        ref = (DiscreteDistribution.uniform(X), assignment(y, 4))
        other = (DiscreteDistribution.uniform(X.copy()), assignment(perm[y], 4))
        [aligned] = align_to_reference(ref, [other])
        np.testing.assert_array_equal(aligned.labels, y)

    def test_relabeling_preserves_partition_sizes(self, rng):
        Xr, yr = make_blobs(rng, [[0.0], [5.0], [10.0]], 8)
        Xo, yo = make_blobs(rng, [[1.0], [6.0], [11.0]], 8)
        # unbalance the other domain's clusters
        yo[0] = 2
        ref = (DiscreteDistribution.uniform(Xr), assignment(yr, 3))
        other = (DiscreteDistribution.uniform(Xo), assignment(yo, 3))
        [aligned] = align_to_reference(ref, [other])
        assert sorted(np.bincount(aligned.labels, minlength=3)) == sorted(
            np.bincount(yo, minlength=3)
        )

    def test_cluster_count_mismatch_rejected(self, rng):
        X = rng.normal(size=(6, 1))
        ref = (DiscreteDistribution.uniform(X), assignment([0, 0, 0, 1, 1, 1], 2))
        other = (DiscreteDistribution.uniform(X), assignment([0, 0, 1, 1, 2, 2], 3))
        with pytest.raises(ValueError, match="3 clusters, reference has 2"):
            align_to_reference(ref, [other])
