import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import blobs, matrix
from powerstate import kernels
from powerstate.cluster import (ElbowBand, StateModel, assign_nearest, detect_elbow,
                                fit_state_model, inertia, kmeans_fit, population_relabel,
                                silhouette_samples, silhouette_score, sweep_k)
from powerstate.errors import FeatureMismatch, SingleCluster, TooFewSamples
from powerstate.features import standardize


class TestKMeans:
    def test_two_points_k1(self):
        km = kmeans_fit(matrix([0.0, 2.0]), 1, restarts=1)
        assert km.centroids[0, 0] == 1.0
        assert km.inertia == 2.0

    def test_k_equals_rows(self, rng):
        X = rng.normal(size=(12, 3))
        assert kmeans_fit(X, 12, restarts=2).inertia == 0.0

    def test_separated_blobs(self, rng):
        centers = np.array([[0.0, 0.0], [10.0, 0.0]])
        X, _ = blobs(rng, centers, 200, 0.1)
        km = kmeans_fit(X, 2)
        got = km.centroids[np.argsort(km.centroids[:, 0])]
        assert np.abs(got - centers).max() < 0.1

    def test_centroid_is_mean_and_nearest(self, rng):
        X = rng.normal(size=(300, 4))
        km = kmeans_fit(X, 5)
        for j in range(5):
            np.testing.assert_allclose(km.centroids[j], X[km.labels == j].mean(axis=0), atol=1e-9)
        lab, _ = kernels.nearest_centroid(X, km.centroids)
        assert np.array_equal(lab, km.labels)
        assert km.converged

    def test_deterministic_and_parallel_equal(self, rng):
        X = rng.normal(size=(200, 3))
        a = kmeans_fit(X, 4, seed=3)
        b = kmeans_fit(X, 4, seed=3)
        c = kmeans_fit(X, 4, seed=3, n_jobs=3)
        for other in (b, c):
            assert np.array_equal(a.centroids, other.centroids)
            assert a.inertia == other.inertia

    def test_row_order_invariance(self, rng):
        X = rng.normal(size=(150, 3))
        perm = rng.permutation(150)
        a = kmeans_fit(X, 3, seed=1)
        b = kmeans_fit(X[perm], 3, seed=1)
        assert np.array_equal(a.centroids, b.centroids)
        assert np.array_equal(a.labels[perm], b.labels)

    def test_too_few_rows(self):
        with pytest.raises(TooFewSamples):
            kmeans_fit(matrix([1.0, 2.0]), 3)

    def test_duplicate_points_more_clusters_than_distinct(self):
        X = np.array([[0.0], [0.0], [0.0], [5.0]])
        km = kmeans_fit(X, 3, restarts=2)
        assert km.inertia == 0.0

    def test_inertia_helper(self, rng):
        X = rng.normal(size=(50, 2))
        km = kmeans_fit(X, 3)
        assert inertia(X, km.centroids) == pytest.approx(km.inertia, rel=1e-12)


def brute_silhouette(X, labels):
    n = len(X)
    out = []
    for i in range(n):
        own = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not own:
            out.append(0.0)
            continue
        a = sum(math.dist(X[i], X[j]) for j in own) / len(own)
        b = min(
            sum(math.dist(X[i], X[j]) for j in range(n) if labels[j] == c)
            / sum(1 for j in range(n) if labels[j] == c)
            for c in set(labels) if c != labels[i]
        )
        out.append(0.0 if max(a, b) == 0 else (b - a) / max(a, b))
    return out


class TestSilhouette:
    def test_tight_pairs(self):
        X = np.array([[0.0], [0.1], [10.0], [10.1]])
        s = silhouette_score(X, [0, 0, 1, 1])
        assert s == pytest.approx(np.mean(brute_silhouette(X.tolist(), [0, 0, 1, 1])), abs=1e-12)
        assert s == pytest.approx(0.990, abs=5e-4)

    def test_interleaved_identical_clusters(self, rng):
        base = rng.normal(size=(50, 2))
        X = np.concatenate([base, base])
        labels = rng.permutation(np.repeat([0, 1], 50))
        assert silhouette_score(X, labels) <= 0.05

    def test_crosswise_mislabel_negative(self):
        X = np.array([[0.0], [0.0], [5.0], [5.0]])
        assert silhouette_score(X, [0, 1, 0, 1]) < 0

    def test_singleton_zero(self):
        X = np.array([[0.0], [1.0], [1.2], [9.0]])
        s = silhouette_samples(X, [0, 1, 1, 2])
        assert s[0] == 0.0 and s[3] == 0.0

    def test_single_cluster_error(self):
        with pytest.raises(SingleCluster):
            silhouette_score(np.zeros((4, 2)), [1, 1, 1, 1])

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.integers(4, 40), st.integers(1, 5), st.integers(2, 5))
    def test_matches_brute_force(self, seed, n, d, k):
        r = np.random.default_rng(seed)
        X = r.normal(size=(n, d))
        labels = r.integers(0, k, n)
        labels[:2] = [0, 1]
        got = silhouette_samples(X, labels)
        want = brute_silhouette(X.tolist(), labels.tolist())
        np.testing.assert_allclose(got, want, atol=1e-9, rtol=0)
        assert np.all(got >= -1) and np.all(got <= 1)


class TestElbow:
    def test_piecewise_knee(self):
        ks = list(range(1, 11))
        y = [100 - 20 * (k - 1) if k <= 5 else 20 - 2 * (k - 5) for k in ks]
        band = detect_elbow(ks, y)
        assert band.distinct and band.k_lo <= 5 <= band.k_hi

    def test_linear_no_elbow(self):
        band = detect_elbow(list(range(1, 21)), [40 - 2 * k for k in range(1, 21)])
        assert band == ElbowBand(1, 20, False)

    def test_band_contiguous_contains_argmax(self, rng):
        ks = list(range(1, 21))
        y = sorted(rng.uniform(0, 100, 20), reverse=True)
        b = detect_elbow(ks, y)
        assert 1 <= b.k_lo <= b.k_hi <= 20


class TestSweep:
    @pytest.mark.parametrize("g", [3, 4, 5])
    def test_recovers_blob_count(self, g):
        r = np.random.default_rng(g)
        centers = r.uniform(-20, 20, (g, 4))
        X, _ = blobs(r, centers, 60, 0.3)
        rep = sweep_k(X, (1, 10), seed=0, restarts=4)
        assert rep.chosen_k == g
        assert len(rep.inertias) == len(rep.k_values) == 10
        assert rep.silhouettes[0] is None

    def test_constant_data(self):
        rep = sweep_k(np.ones((30, 3)), (1, 5), restarts=2)
        assert rep.degenerate and rep.chosen_k == 1
        assert all(i == 0 for i in rep.inertias)

    def test_too_few_rows(self):
        with pytest.raises(TooFewSamples):
            sweep_k(np.ones((3, 2)), (1, 5))

    def test_silhouette_subsample(self, rng):
        X, _ = blobs(rng, [[0, 0], [9, 9]], 100, 0.2)
        rep = sweep_k(X, (1, 4), silhouette_sample=50, restarts=2)
        assert rep.chosen_k == 2


class TestStateModel:
    def test_population_order(self, rng):
        X = np.concatenate([rng.normal(0, 0.1, (10, 2)), rng.normal(5, 0.1, (40, 2)),
                            rng.normal(-5, 0.1, (25, 2))])
        sm = fit_state_model(matrix(X), 3)
        assert sm.populations.tolist() == [40, 25, 10]
        asg = assign_nearest(sm, matrix(X))
        assert np.bincount(asg.labels).tolist() == [40, 25, 10]
        assert np.abs(sm.centroids[0] - 5).max() < 0.1

    def test_training_labels_reproduced(self, rng):
        m = matrix(rng.normal(size=(100, 3)))
        sm = fit_state_model(m, 4)
        asg = assign_nearest(sm, m)
        assert np.array_equal(asg.labels, sm.relabel_map[sm.kmeans.labels])

    def test_k1_global_mean(self, rng):
        m = matrix(rng.normal(size=(40, 2)))
        sm = fit_state_model(m, 1)
        np.testing.assert_allclose(sm.centroids[0], m.values.mean(axis=0), atol=1e-12)

    def test_point_on_centroid_and_tie(self):
        m = matrix(np.array([[0.0], [0.0], [0.0], [2.0], [2.0]]))
        sm = fit_state_model(m, 2, restarts=1)
        asg = assign_nearest(sm, matrix(np.array([[2.0], [1.0]])))
        assert asg.labels[0] == 1
        # 1.0 is equidistant: pre-relabel centroid 0 wins
        assert asg.labels[1] == sm.relabel_map[0]

    def test_feature_mismatch(self, rng):
        sm = fit_state_model(matrix(rng.normal(size=(20, 2))), 2)
        with pytest.raises(FeatureMismatch):
            assign_nearest(sm, matrix(rng.normal(size=(5, 2)), names=("x", "y")))

    def test_scaling_applied_to_raw_input(self, rng):
        raw = matrix(rng.normal(50, 10, (60, 3)))
        sm = fit_state_model(standardize(raw), 3)
        a = assign_nearest(sm, raw)
        b = assign_nearest(sm, standardize(raw))
        assert np.array_equal(a.labels, b.labels)

    def test_json_round_trip(self, rng):
        raw = matrix(rng.normal(size=(60, 3)))
        sm = fit_state_model(standardize(raw), 3)
        back = StateModel.from_json(sm.to_json())
        assert np.array_equal(back.centroids, sm.centroids)
        assert np.array_equal(assign_nearest(back, raw).labels, assign_nearest(sm, raw).labels)
        d = json.loads(sm.to_json())
        assert d["version"] == 1 and d["k"] == 3

    def test_relabel_is_bijection(self):
        r = population_relabel(np.array([2, 2, 0, 1, 1, 1]), 4)
        assert sorted(r.tolist()) == [0, 1, 2, 3]
        assert r[1] == 0 and r[2] == 1
