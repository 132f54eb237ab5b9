import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.cluster import HDBSCAN as SkHDBSCAN
from sklearn.metrics import adjusted_rand_score

from lidarsel.cluster import (
    HdbscanParams,
    condense_and_select,
    core_distances,
    hdbscan,
    mutual_reachability_mst,
)
from lidarsel.errors import ConfigError
from util import make_blobs, same_partition

PARAMS = HdbscanParams(min_cluster_size=20, min_samples=10,
                       cluster_selection_epsilon=0.5)


def brute_force_core(points, k):
    d = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
    return np.sort(d, axis=1)[:, k]  # column 0 is the self distance 0


def brute_force_mst_weight(points, core):
    """Total MST weight by Kruskal over every pair."""
    n = len(points)
    edges = []
    for i, j in itertools.combinations(range(n), 2):
        d = float(np.linalg.norm(points[i] - points[j]))
        edges.append((max(d, core[i], core[j]), i, j))
    edges.sort()
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    total = 0.0
    for w, i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            total += w
    return total


class TestCoreDistances:
    def test_collinear_k1(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], dtype=float)
        np.testing.assert_allclose(core_distances(pts, 1), [1, 1, 1])

    def test_collinear_k2(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], dtype=float)
        np.testing.assert_allclose(core_distances(pts, 2), [2, 1, 2])

    def test_matches_brute_force(self):
        rng = np.random.default_rng(5)
        pts = rng.uniform(0, 10, size=(100, 3))
        np.testing.assert_array_equal(core_distances(pts, 5),
                                      brute_force_core(pts, 5))

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            core_distances(np.zeros((3, 3)), 3)

    def test_parameter_validation(self):
        with pytest.raises(ConfigError):
            HdbscanParams(min_cluster_size=1)
        with pytest.raises(ConfigError):
            HdbscanParams(min_samples=0)
        with pytest.raises(ConfigError):
            HdbscanParams(cluster_selection_epsilon=-0.1)


class TestMutualReachabilityMst:
    def test_two_points(self):
        pts = np.array([[0, 0, 0], [3, 0, 0]], dtype=float)
        core = np.array([1.0, 5.0])
        edges = mutual_reachability_mst(pts, core)
        assert edges.shape == (1, 3)
        assert edges[0, 2] == max(5.0, 3.0)

    def test_square_matches_exhaustive_kruskal(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)
        core = core_distances(pts, 1)
        edges = mutual_reachability_mst(pts, core)
        assert edges.shape == (3, 3)
        assert np.isclose(edges[:, 2].sum(), brute_force_mst_weight(pts, core))

    def test_random_instances_match_oracle_weight(self):
        rng = np.random.default_rng(6)
        for _ in range(5):
            pts = rng.uniform(0, 5, size=(40, 3))
            core = core_distances(pts, 3)
            edges = mutual_reachability_mst(pts, core)
            assert np.isclose(edges[:, 2].sum(),
                              brute_force_mst_weight(pts, core))

    def test_duplicate_points_zero_weight(self):
        pts = np.zeros((3, 3))
        core = np.zeros(3)
        edges = mutual_reachability_mst(pts, core)
        assert (edges[:, 2] == 0).all()


class TestCondenseAndSelect:
    def test_two_blobs_fully_recovered(self):
        rng = np.random.default_rng(7)
        pts, truth = make_blobs(rng, centers=np.array([[0, 0, 0], [20, 0, 0]]),
                                sizes=[50, 50], spread=0.3)
        labels = hdbscan(pts, PARAMS)
        assert adjusted_rand_score(truth, labels) == 1.0
        assert (labels >= 0).all()  # no noise
        assert len(np.unique(labels)) == 2

    def test_below_minimum_all_noise(self):
        rng = np.random.default_rng(8)
        pts = rng.normal(size=(10, 3))
        edges = mutual_reachability_mst(pts, core_distances(pts, 2))
        labels = condense_and_select(edges, min_cluster_size=20, epsilon=0.0)
        assert (labels == -1).all()

    def test_epsilon_merges_close_blobs(self):
        # two dense slabs with a 0.3 m gap: below epsilon=0.5 they must
        # stay merged as a single cluster
        rng = np.random.default_rng(9)
        a = rng.uniform(0, 1, size=(60, 3))
        b = rng.uniform(0, 1, size=(60, 3))
        b[:, 0] += 1.3
        pts = np.concatenate([a, b])
        merged = hdbscan(pts, HdbscanParams(20, 10, 0.5))
        assert len(np.unique(merged[merged >= 0])) == 1
        split = hdbscan(pts, HdbscanParams(20, 10, 0.0))
        assert len(np.unique(split[split >= 0])) == 2

    def test_cluster_ids_contiguous_first_occurrence(self):
        rng = np.random.default_rng(10)
        pts, _ = make_blobs(rng, n_blobs=3, sizes=[60, 60, 60], spread=0.2,
                            sep=8.0)
        labels = hdbscan(pts, PARAMS)
        seen = []
        for v in labels:
            if v >= 0 and v not in seen:
                seen.append(v)
        assert seen == sorted(seen)
        assert seen[0] == 0 and seen == list(range(len(seen)))

    def test_min_cluster_size_respected(self):
        rng = np.random.default_rng(11)
        pts, _ = make_blobs(rng, n_blobs=4, sizes=[25, 60, 120, 40], spread=0.2,
                            sep=10.0)
        labels = hdbscan(pts, PARAMS)
        for v in np.unique(labels[labels >= 0]):
            assert (labels == v).sum() >= PARAMS.min_cluster_size


class TestInvariances:
    @settings(max_examples=10, deadline=None)
    @given(st.integers(min_value=0, max_value=2**31 - 1))
    def test_permutation_equivariance(self, seed):
        rng = np.random.default_rng(seed)
        pts, _ = make_blobs(rng, n_blobs=3, sizes=[40, 80, 60], spread=0.25,
                            sep=7.0)
        labels = hdbscan(pts, PARAMS)
        perm = rng.permutation(len(pts))
        permuted = hdbscan(pts[perm], PARAMS)
        assert same_partition(labels[perm], permuted)

    @settings(max_examples=10, deadline=None)
    @given(st.integers(min_value=0, max_value=2**31 - 1))
    def test_translation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        pts, _ = make_blobs(rng, n_blobs=2, sizes=[70, 90], spread=0.3, sep=9.0)
        offset = rng.uniform(-100, 100, size=3)
        labels = hdbscan(pts, PARAMS)
        shifted = hdbscan(pts + offset, PARAMS)
        assert same_partition(labels, shifted)


class TestReferenceAgreement:
    @pytest.mark.parametrize("seed,n_blobs", [(21, 2), (22, 3), (23, 4), (24, 5)])
    def test_matches_sklearn_exactly(self, seed, n_blobs):
        rng = np.random.default_rng(seed)
        sizes = rng.integers(40, 120, size=n_blobs)
        pts, _ = make_blobs(rng, n_blobs=n_blobs, sizes=sizes, spread=0.2,
                            sep=6.0)
        assert len(pts) <= 500
        mine = hdbscan(pts, PARAMS)
        ref = SkHDBSCAN(
            min_cluster_size=PARAMS.min_cluster_size,
            min_samples=PARAMS.min_samples,
            cluster_selection_epsilon=PARAMS.cluster_selection_epsilon,
        ).fit_predict(pts)
        assert same_partition(mine, ref)
