import numpy as np
import pytest

from oracles import assert_histories_identical, check_history_invariants
from imapce.core import Dataset, Hyperparams, PriorSpec, ValidationError
from imapce.dpgmm import ClusterSummary, DpgmmConfig
from imapce.exploration import distance_matrix, explore, mahalanobis, most_distinct


def summary(mean, cov, label=0, size=100):
    return ClusterSummary(label, np.asarray(mean, float), np.asarray(cov, float), size)


def two_blobs(seed=0, d=10):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((600, d))
    X[:300, 0] += 12.0
    return Dataset(X, np.repeat([0, 1], 300))


def four_blobs(seed=0):
    rng = np.random.default_rng(seed)
    centers = np.array([[0, 0, 0], [12, 0, 0], [0, 12, 0], [0, 0, 12]], float)
    labels = np.repeat(np.arange(4), [200, 150, 150, 120])
    X = np.hstack((centers[labels] + rng.standard_normal((620, 3)), rng.standard_normal((620, 3))))
    return Dataset(X, labels)


class TestMahalanobis:
    def test_identity_is_euclidean(self):
        assert mahalanobis([3.0, 4.0], [0.0, 0.0], np.eye(2)) == pytest.approx(5.0)

    def test_same_mean(self):
        assert mahalanobis([1.0, 2.0], [1.0, 2.0], np.diag([3.0, 4.0])) == 0.0

    def test_hand_example(self):
        assert mahalanobis([2.0, 0.0], [0.0, 0.0], np.diag([4.0, 1.0])) == pytest.approx(1.0)

    def test_not_positive_definite(self):
        with pytest.raises(ValidationError):
            mahalanobis([1.0, 0.0], [0.0, 0.0], np.zeros((2, 2)))


class TestDistanceMatrix:
    def test_symmetrised_mean(self):
        # delta_12 = 3 (cluster 1 has unit covariance), delta_21 = 5 needs variance (3/5)^2
        a = summary([0.0], [[1.0]])
        b = summary([3.0], [[0.36]])
        D = distance_matrix([a, b])
        assert D[0, 1] == pytest.approx(4.0) and D[1, 0] == pytest.approx(4.0)

    def test_identical_clusters(self):
        c = summary([1.0, 1.0], np.eye(2))
        np.testing.assert_array_equal(distance_matrix([c, c, c]), 0.0)

    def test_three_cluster_brute_force(self):
        rng = np.random.default_rng(0)
        clusters = []
        for i in range(3):
            A = rng.standard_normal((2, 2))
            clusters.append(summary(rng.uniform(-5, 5, 2), A @ A.T + np.eye(2), label=i))
        D = distance_matrix(clusters)
        for l in range(3):
            for j in range(3):
                dl = clusters[j].mean - clusters[l].mean
                djl = clusters[l].mean - clusters[j].mean
                d1 = np.sqrt(dl @ np.linalg.inv(clusters[l].covariance) @ dl)
                d2 = np.sqrt(djl @ np.linalg.inv(clusters[j].covariance) @ djl)
                assert D[l, j] == pytest.approx((d1 + d2) / 2)
        np.testing.assert_array_equal(D, D.T)
        assert np.all(np.diag(D) == 0)

    def test_needs_two(self):
        with pytest.raises(ValidationError):
            distance_matrix([summary([0.0], [[1.0]])])


class TestMostDistinct:
    def _D(self, sums):
        # any symmetric matrix with these row sums works for argmax; build one explicitly
        D = np.zeros((3, 3))
        a, b, c = sums
        D[0, 1] = D[1, 0] = (a + b - c) / 2
        D[0, 2] = D[2, 0] = (a + c - b) / 2
        D[1, 2] = D[2, 1] = (b + c - a) / 2
        return D

    def test_argmax(self):
        assert most_distinct(self._D((5, 9, 4))) == (1,)

    def test_tie_lowest_index(self):
        assert most_distinct(self._D((5, 5, 2))) == (0,)

    def test_two_clusters_both(self):
        assert most_distinct(np.array([[0.0, 3.0], [3.0, 0.0]])) == (0, 1)

    def test_invalid(self):
        with pytest.raises(ValidationError):
            most_distinct(np.zeros((1, 1)))


class TestExplore:
    def test_two_blobs(self):
        data = two_blobs()
        hist = explore(data, PriorSpec.none(), Hyperparams(alpha=1.0, mu=0.0, s=75))
        assert 1 <= len(hist.iterations) <= 2
        first = hist.iterations[0].distinct_cluster_rows[0]
        purity = np.bincount(data.labels[first]).max() / len(first)
        assert purity >= 0.95
        check_history_invariants(hist, data.n)

    def test_single_acceptable_cluster_stops(self):
        X = np.random.default_rng(0).standard_normal((300, 4))
        hist = explore(Dataset(X), PriorSpec.none(), Hyperparams(s=160))
        assert hist.terminal_reason == "no_acceptable_cluster"
        assert len(hist.iterations) == 1
        assert hist.iterations[0].distinct_cluster_rows == []

    def test_s_larger_than_n(self):
        hist = explore(two_blobs(), PriorSpec.none(), Hyperparams(s=5000))
        assert hist.iterations == [] and hist.terminal_reason == "too_few_unexplored"

    def test_first_round_alpha_zero(self):
        hist = explore(four_blobs(), PriorSpec.none(), Hyperparams(alpha=1.0, mu=10.0, s=75))
        assert hist.iterations[0].alpha == 0.0
        assert all(it.alpha == 1.0 for it in hist.iterations[1:])

    def test_max_iterations(self):
        hist = explore(four_blobs(), PriorSpec.none(), Hyperparams(s=75), max_outer_iterations=1)
        assert hist.terminal_reason == "max_iterations" and len(hist.iterations) == 1

    @pytest.mark.parametrize("method", ["imapce", "cpca"])
    def test_invariants_and_determinism(self, method):
        data = four_blobs(1)
        hp = Hyperparams(alpha=1.0, mu=10.0, s=60, seed=3)
        a = explore(data, PriorSpec.none(), hp, method=method)
        b = explore(data, PriorSpec.none(), hp, method=method)
        assert check_history_invariants(a, data.n) >= 2
        assert_histories_identical(a, b)

    def test_subset_prior_rows_never_claimed(self):
        data = four_blobs(2)
        prior_rows = np.flatnonzero(data.labels == 0)
        hist = explore(data, PriorSpec.subset(prior_rows), Hyperparams(alpha=1.0, mu=10.0, s=60))
        check_history_invariants(hist, data.n)
        claimed = np.concatenate(hist.distinct_clusters) if hist.distinct_clusters else []
        assert not set(claimed) & set(prior_rows)
        assert hist.iterations[0].alpha == 1.0

    def test_attribute_prior(self):
        data = four_blobs(3)
        hist = explore(data, PriorSpec.attributes([0]), Hyperparams(alpha=1.0, s=60))
        check_history_invariants(hist, data.n)

    def test_unknown_method(self):
        with pytest.raises(ValidationError):
            explore(two_blobs(), method="tsne")

    def test_unexplored_after(self):
        data = four_blobs(1)
        hist = explore(data, PriorSpec.none(), Hyperparams(s=60))
        for i, it in enumerate(hist.iterations[:-1]):
            np.testing.assert_array_equal(hist.unexplored_after(i),
                                          hist.iterations[i + 1].embeddings.source_rows)
