"""Unit tests for k-means."""

import itertools

import numpy as np
import pytest

from SRC.clustering.kmeans import assign, kmeans_fit, squared_distances
from SRC.shared.exceptions import ValidationError


def _induced_inertia(points, labels, k):
    total = 0.0
    for j in range(k):
        members = points[labels == j]
        if len(members):
            total += float(((members - members.mean(axis=0)) ** 2).sum())
    return total


def _brute_force_optimum(points, k=2):
    best = np.inf
    for labels in itertools.product(range(k), repeat=len(points)):
        labels = np.array(labels)
        if len(set(labels)) == k:
            best = min(best, _induced_inertia(points, labels, k))
    return best


def _assert_fixed_point(points, result):
    labels, _ = assign(points, result.centroids)
    np.testing.assert_array_equal(labels, result.labels)
    for j in range(len(result.centroids)):
        members = points[result.labels == j]
        if len(members):
            np.testing.assert_allclose(result.centroids[j], members.mean(axis=0), atol=1e-5)


@pytest.mark.unit
@pytest.mark.clustering
class TestKMeansFit:
    """Test cases for Lloyd iterations from k-means++ seeding."""

    def test_points_at_distinct_locations(self):
        """Test k = n distinct points are their own centroids with zero inertia (edge case)."""
        points = np.array([[0.0, 0.0], [5.0, 1.0], [-3.0, 2.0], [1.0, -4.0]])
        result = kmeans_fit(points, 4, seed=0)

        assert result.inertia == pytest.approx(0.0, abs=1e-12)
        assert sorted(map(tuple, result.centroids)) == sorted(map(tuple, points))

    def test_one_dimensional_hand_case(self):
        """Test {0, 1, 10, 11} with k=2 gives centroids {0.5, 10.5} and inertia 1 (happy path)."""
        result = kmeans_fit(np.array([[0.0], [1.0], [10.0], [11.0]]), 2, seed=3)

        assert sorted(result.centroids[:, 0]) == pytest.approx([0.5, 10.5])
        assert result.inertia == pytest.approx(1.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_brute_force_oracle(self, seed):
        """Test n=8, d=2, k=2 ends at a fixed point no better than the brute-force optimum."""
        points = np.random.default_rng(seed).normal(size=(8, 2))
        result = kmeans_fit(points, 2, seed=seed, n_init=10)
        optimum = _brute_force_optimum(points)

        _assert_fixed_point(points, result)
        assert result.inertia >= optimum - 1e-9
        assert result.inertia == pytest.approx(_induced_inertia(points, result.labels, 2), rel=1e-6)

    def test_separated_blobs_reach_optimum(self):
        """Test well-separated blobs hit the brute-force optimum exactly."""
        rng = np.random.default_rng(5)
        points = np.vstack([rng.normal(0, 0.3, size=(4, 2)), rng.normal(6, 0.3, size=(4, 2))])
        result = kmeans_fit(points, 2, seed=1)

        assert result.inertia == pytest.approx(_brute_force_optimum(points), rel=1e-9)

    def test_inertia_monotone_and_consistent(self, rng):
        """Test inertia never rises and matches the final assignment within 1e-4."""
        points = rng.normal(size=(200, 4))
        result = kmeans_fit(points, 4, seed=2)
        history = result.inertia_history

        assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))
        recomputed = float(squared_distances(points, result.centroids)[np.arange(200), result.labels].sum())
        assert result.inertia == pytest.approx(recomputed, abs=1e-4)
        _assert_fixed_point(points, result)

    def test_same_seed_same_result(self, rng):
        """Test k-means is a pure function of its seed."""
        points = rng.normal(size=(50, 3))
        a, b = kmeans_fit(points, 4, seed=9), kmeans_fit(points, 4, seed=9)

        np.testing.assert_array_equal(a.centroids, b.centroids)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_restarts_never_worse(self, rng):
        """Test n_init=5 is at least as good as its first restart."""
        points = rng.normal(size=(60, 2))

        assert kmeans_fit(points, 4, seed=4, n_init=5).inertia <= kmeans_fit(points, 4, seed=4).inertia + 1e-9

    def test_fewer_points_than_clusters(self):
        """Test n < k is rejected (negative case)."""
        with pytest.raises(ValidationError):
            kmeans_fit(np.zeros((3, 2)), 4, seed=0)

    def test_non_finite_points(self):
        """Test NaN points are rejected (negative case)."""
        points = np.zeros((5, 2))
        points[2, 1] = np.nan

        with pytest.raises(ValidationError):
            kmeans_fit(points, 2, seed=0)


@pytest.mark.unit
@pytest.mark.clustering
class TestAssign:
    """Test cases for nearest-centroid assignment."""

    def test_lowest_index_tie_break(self):
        """Test an equidistant point goes to the lower index (edge case)."""
        labels, _ = assign(np.array([[0.0, 0.0]]), np.array([[1.0, 0.0], [-1.0, 0.0]]))

        assert labels[0] == 0
