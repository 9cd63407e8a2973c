"""PCA by power iteration with deflation, for 2-D views of the state space."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import FeatureMismatch, RankDeficient, TooFewSamples
from .features import FeatureMatrix


class RankDeficientWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PcaModel:
    mean_vector: np.ndarray
    components: np.ndarray  # c x n, orthonormal rows
    explained_variance: np.ndarray
    feature_names: tuple = ()
    rank_deficient: bool = False


def _power_iteration(A, start, tol, max_iter):
    v = start / np.linalg.norm(start)
    lam = float(v @ A @ v)
    for _ in range(max_iter):
        w = A @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return v, 0.0
        w /= norm
        # align sign before measuring the change so a negative eigenvalue
        # (possible after deflation round-off) does not look like oscillation
        if w @ v < 0:
            w = -w
        delta = np.linalg.norm(w - v)
        v = w
        lam = float(v @ A @ v)
        if delta < tol:
            break
    return v, lam


def _sign_fix(v):
    # largest-magnitude entry positive; the first one wins on ties
    i = int(np.argmax(np.abs(v)))
    return -v if v[i] < 0 else v


def _complete(basis, n, count):
    """Extend orthonormal rows ``basis`` with ``count`` more via Gram-Schmidt on unit vectors."""
    rows = [b for b in basis]
    for e in np.eye(n):
        if len(rows) == len(basis) + count:
            break
        v = e.copy()
        for r in rows:
            v -= (r @ v) * r
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            rows.append(_sign_fix(v / nv))
    return rows[len(basis):]


def eigen_top(cov, c, tol=1e-10, max_iter=10_000):
    """Top ``c`` eigenpairs of a symmetric PSD matrix by deflation.

    Returns (values, vectors as rows, rank_deficient). Eigenvalues at or below
    ``1e-12 * trace`` count as zero; the corresponding vectors are an
    arbitrary orthonormal completion.
    """
    cov = np.asarray(cov, dtype=np.float64)
    n = cov.shape[0]
    A = cov.copy()
    floor = 1e-12 * max(float(np.trace(cov)), 0.0)
    rng = np.random.default_rng(0)
    vals, vecs = [], []
    deficient = False
    for _ in range(c):
        start = rng.standard_normal(n)
        for v in vecs:
            start -= (v @ start) * v
        v, lam = _power_iteration(A, start, tol, max_iter)
        # re-orthogonalise against earlier vectors and refine with the original matrix
        for u in vecs:
            v = v - (u @ v) * u
        v /= np.linalg.norm(v)
        lam = float(v @ cov @ v)
        if lam <= floor:
            deficient = True
            break
        v = _sign_fix(v)
        vals.append(lam)
        vecs.append(v)
        A = A - lam * np.outer(v, v)
    if deficient:
        fill = _complete(vecs, n, c - len(vecs))
        vals.extend(float(f @ cov @ f) for f in fill)
        vecs.extend(fill)
    return np.array(vals), np.array(vecs).reshape(len(vecs), n), deficient


def pca_fit(m, c=2, strict=False):
    """Top-``c`` principal components of the mean-centred data.

    Covariance uses 1/(N-1). When fewer than ``c`` non-zero eigenvalues exist a
    :class:`RankDeficientWarning` is issued and the basis is padded (or
    :class:`RankDeficient` raised with ``strict=True``).
    """
    X = m.values if isinstance(m, FeatureMatrix) else np.asarray(m, dtype=np.float64)
    names = m.feature_names if isinstance(m, FeatureMatrix) else ()
    N, n = X.shape
    if N <= c or n < c:
        raise TooFewSamples(f"PCA with c={c} needs more than {c} rows and at least {c} features")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (N - 1)
    vals, vecs, deficient = eigen_top(cov, c)
    if deficient:
        if strict:
            raise RankDeficient(f"fewer than {c} non-zero eigenvalues")
        warnings.warn(f"data has fewer than {c} non-zero principal directions",
                      RankDeficientWarning, stacklevel=2)
    return PcaModel(mean, vecs, vals, tuple(names), deficient)


def project(model, m):
    """Rows of ``(x - mean) @ components.T``."""
    if isinstance(m, FeatureMatrix):
        if model.feature_names and tuple(m.feature_names) != model.feature_names:
            raise FeatureMismatch(model.feature_names, m.feature_names)
        X = m.values
    else:
        X = np.asarray(m, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != model.components.shape[1]:
        raise FeatureMismatch(model.feature_names or range(model.components.shape[1]),
                              range(X.shape[1]))
    return (X - model.mean_vector) @ model.components.T
