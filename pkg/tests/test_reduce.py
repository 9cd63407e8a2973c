import warnings

import numpy as np
import pytest

from conftest import matrix
from powerstate.errors import FeatureMismatch, RankDeficient, TooFewSamples
from powerstate.reduce import RankDeficientWarning, eigen_top, pca_fit, project


def test_line_in_15d(rng):
    direction = rng.normal(size=15)
    direction /= np.linalg.norm(direction)
    X = rng.normal(size=(200, 1)) * direction + 3.0
    with pytest.warns(RankDeficientWarning):
        model = pca_fit(matrix(X))
    assert abs(model.components[0] @ direction) > 1 - 1e-6
    assert model.explained_variance[1] == pytest.approx(0.0, abs=1e-9)
    assert model.rank_deficient


def test_isotropic(rng):
    model = pca_fit(rng.normal(size=(10_000, 3)), c=3)
    ev = model.explained_variance
    assert ev.max() / ev.min() < 1.1


def test_ellipse_4_1(rng):
    X = rng.normal(size=(10_000, 2)) * [2.0, 1.0]
    model = pca_fit(X)
    np.testing.assert_allclose(model.explained_variance, [4.0, 1.0], rtol=0.05)
    assert abs(model.components[0, 0]) > 0.99


def test_project_mean_is_origin(rng):
    X = rng.normal(size=(50, 5))
    model = pca_fit(X)
    np.testing.assert_allclose(project(model, X.mean(axis=0)), 0, atol=1e-12)


def test_projected_variance_and_orthonormality(rng):
    X = rng.normal(size=(500, 6)) @ rng.normal(size=(6, 6))
    model = pca_fit(X, c=3)
    P = project(model, X)
    np.testing.assert_allclose(P.var(axis=0, ddof=1), model.explained_variance, rtol=1e-6)
    np.testing.assert_allclose(model.components @ model.components.T, np.eye(3), atol=1e-9)
    assert np.all(np.diff(model.explained_variance) <= 0)
    assert P.var(axis=0, ddof=1).sum() <= X.var(axis=0, ddof=1).sum() + 1e-9


def test_full_reconstruction(rng):
    X = rng.normal(size=(40, 4))
    model = pca_fit(X, c=4)
    back = project(model, X) @ model.components + model.mean_vector
    np.testing.assert_allclose(back, X, atol=1e-9)


def test_translation_equivariance(rng):
    X = rng.normal(size=(100, 4)) * [3, 2, 1, 0.5]
    a = project(pca_fit(X), X)
    Y = X + rng.normal(size=4) * 100
    b = project(pca_fit(Y), Y)
    np.testing.assert_allclose(a, b, atol=1e-8)


def test_sign_convention(rng):
    model = pca_fit(rng.normal(size=(100, 5)) * [5, 4, 3, 2, 1])
    for v in model.components:
        assert v[np.argmax(np.abs(v))] > 0


def test_feature_mismatch(rng):
    model = pca_fit(matrix(rng.normal(size=(10, 3))))
    with pytest.raises(FeatureMismatch):
        project(model, matrix(rng.normal(size=(3, 3)), names=("a", "b", "c")))
    with pytest.raises(FeatureMismatch):
        project(model, rng.normal(size=(3, 4)))


def test_strict_rank_deficiency():
    X = np.column_stack([np.arange(10.0), np.zeros(10)])
    with pytest.raises(RankDeficient):
        pca_fit(X, strict=True)


def test_too_few_rows():
    with pytest.raises(TooFewSamples):
        pca_fit(np.ones((2, 3)))


def test_eigen_top_against_numpy(rng):
    # numpy is used here only as a cross-check; the acceptance suite has its own oracle
    A = rng.normal(size=(6, 6))
    cov = A @ A.T
    vals, vecs, _ = eigen_top(cov, 6)
    ref = np.sort(np.linalg.eigvalsh(cov))[::-1]
    np.testing.assert_allclose(vals, ref, rtol=1e-8)
    np.testing.assert_allclose(cov @ vecs.T, vecs.T * vals, atol=1e-6)


def test_no_warning_when_full_rank(rng):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        pca_fit(rng.normal(size=(30, 3)))
