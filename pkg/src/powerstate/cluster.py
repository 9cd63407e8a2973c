"""K-Means state discovery: fitting, silhouette, k-sweep and elbow detection.

Distances are squared Euclidean for K-Means and plain Euclidean for the
silhouette. Rows are put into a canonical (lexicographic) order before
fitting, so a fit does not depend on the order rows arrive in.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import FeatureMismatch, SingleCluster, TooFewSamples
from .features import FeatureMatrix, Scaling

log = logging.getLogger(__name__)

STATE_MODEL_VERSION = 1


def _as_array(m):
    if isinstance(m, FeatureMatrix):
        return m.values
    a = np.asarray(m, dtype=np.float64)
    return a.reshape(-1, 1) if a.ndim == 1 else a


@dataclass
class KMeansModel:
    k: int
    centroids: np.ndarray
    inertia: float
    iterations_run: int
    seed: int
    restarts: int
    labels: np.ndarray  # training labels, in input row order
    converged: bool = True
    restart_index: int = 0


def _run_seed(seed, k, restart):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(k), int(restart)]))


def kmeanspp_init(X, k, rng):
    """Greedy k-means++ seeding.

    Each new centre is the best (lowest resulting potential) of
    ``2 + floor(ln k)`` candidates drawn with probability proportional to the
    squared distance to the nearest existing centre.
    """
    n = len(X)
    trials = 2 + int(math.log(k)) if k > 1 else 1
    chosen = [int(rng.integers(n))]
    closest = kernels.nearest_centroid(X, X[chosen])[1]
    for _ in range(1, k):
        total = closest.sum()
        if not total > 0:
            # every point coincides with a centre; take unused rows in order
            used = set(chosen)
            chosen.append(next(i for i in range(n) if i not in used))
            continue
        cum = np.cumsum(closest)
        cand = np.searchsorted(cum, rng.random(trials) * total, side="right")
        cand = np.minimum(cand, n - 1)
        best, best_pot, best_d = None, np.inf, None
        for c in cand:
            d = np.minimum(closest, kernels.nearest_centroid(X, X[c:c + 1])[1])
            pot = d.sum()
            if pot < best_pot:
                best, best_pot, best_d = int(c), pot, d
        chosen.append(best)
        closest = best_d
    return X[chosen].copy()


def _update_centroids(X, labels, dist, k):
    """Means of assigned points; empty clusters reseeded to the farthest points."""
    counts = np.bincount(labels, minlength=k)
    sums = np.zeros((k, X.shape[1]))
    np.add.at(sums, labels, X)
    C = np.empty_like(sums)
    nonempty = counts > 0
    C[nonempty] = sums[nonempty] / counts[nonempty, None]
    if not nonempty.all():
        dist = dist.copy()
        for j in np.flatnonzero(~nonempty):
            far = int(np.argmax(dist))
            C[j] = X[far]
            dist[far] = -1.0
    return C


def _lloyd(X, k, rng, max_iter, tol):
    C = kmeanspp_init(X, k, rng)
    labels, dist = kernels.nearest_centroid(X, C)
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        C_new = _update_centroids(X, labels, dist, k)
        shift = float(np.sqrt(((C_new - C) ** 2).sum()))
        C = C_new
        new_labels, dist = kernels.nearest_centroid(X, C)
        stable = np.array_equal(new_labels, labels)
        labels = new_labels
        # stable labels make the next update a no-op (shift exactly 0 < tol),
        # so stopping here leaves a true fixed point
        if stable:
            converged = True
            break
        log.debug("iter %d shift %.3g", it, shift)
    return C, labels, float(dist.sum()), it, converged


def kmeans_fit(m, k, seed=0, restarts=10, max_iter=300, tol=1e-6, n_jobs=1):
    """Best of ``restarts`` Lloyd runs from greedy k-means++ seeding.

    A run stops once an assignment pass leaves every label unchanged; the
    following centroid shift is then exactly 0, below any ``tol``.
    Deterministic for fixed data, k, seed and restarts. Restart r draws from
    a generator seeded with (seed, k, r), and the lowest-inertia run wins
    with ties going to the lower restart index, so ``n_jobs`` does not change
    the result.
    """
    X = _as_array(m)
    n = len(X)
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        raise TooFewSamples(f"{n} rows for k={k}")
    order = np.lexsort(X.T[::-1]) if X.shape[1] else np.arange(n)
    Xs = np.ascontiguousarray(X[order])

    def run(r):
        return _lloyd(Xs, k, _run_seed(seed, k, r), max_iter, tol)

    if n_jobs and n_jobs > 1 and restarts > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            results = list(ex.map(run, range(restarts)))
    else:
        results = [run(r) for r in range(restarts)]
    best = min(range(restarts), key=lambda r: (results[r][2], r))
    C, lab_sorted, inertia, iters, conv = results[best]
    labels = np.empty(n, dtype=np.int64)
    labels[order] = lab_sorted
    return KMeansModel(k, C, inertia, iters, int(seed), int(restarts), labels, conv, best)


def inertia(m, centroids):
    return float(kernels.nearest_centroid(_as_array(m), centroids)[1].sum())


def silhouette_samples(m, labels):
    X = _as_array(m)
    labels = np.asarray(labels)
    if len(labels) != len(X):
        raise ValueError("labels length differs from rows")
    uniq, inv = np.unique(labels, return_inverse=True)
    if len(uniq) < 2:
        raise SingleCluster("silhouette needs at least 2 distinct labels")
    return kernels.silhouette_samples(X, inv, len(uniq))


def silhouette_score(m, labels):
    """Mean silhouette coefficient; singleton-cluster points count as 0."""
    return float(np.mean(silhouette_samples(m, labels)))


class ElbowBand(NamedTuple):
    k_lo: int
    k_hi: int
    distinct: bool = True


def detect_elbow(k_values, inertias, band_fraction=0.9):
    """Band of k values around the point of maximum distance below the chord.

    Both axes are rescaled to [0, 1] before measuring. The band is the
    contiguous run around the best point whose distance is at least
    ``band_fraction`` of the maximum. A curve with no point below the chord
    (straight or concave) has no distinct elbow; the full range is returned
    with ``distinct=False``.
    """
    k = np.asarray(k_values, dtype=np.float64)
    y = np.asarray(inertias, dtype=np.float64)
    if len(k) == 0:
        raise ValueError("no inertia values")
    lo, hi = int(k_values[0]), int(k_values[-1])
    if len(k) < 3:
        return ElbowBand(lo, hi, False)
    span_y = y.max() - y.min()
    if not span_y > 0:
        return ElbowBand(lo, hi, False)
    xn = (k - k[0]) / (k[-1] - k[0])
    yn = (y - y.min()) / span_y
    dx, dy = xn[-1] - xn[0], yn[-1] - yn[0]
    # signed distance, positive below the chord for a decreasing curve
    dist = ((xn - xn[0]) * dy - (yn - yn[0]) * dx) / math.hypot(dx, dy)
    if dy > 0:
        dist = -dist
    best = int(np.argmax(dist))
    if not dist[best] > 1e-9:
        return ElbowBand(lo, hi, False)
    cut = band_fraction * dist[best]
    a = b = best
    while a > 0 and dist[a - 1] >= cut:
        a -= 1
    while b < len(dist) - 1 and dist[b + 1] >= cut:
        b += 1
    return ElbowBand(int(k_values[a]), int(k_values[b]), True)


@dataclass
class KSweepReport:
    k_values: list
    inertias: list
    silhouettes: list  # None at k=1
    elbow_band: ElbowBand
    chosen_k: int
    selection_rule: str
    degenerate: bool = False
    models: dict = field(default_factory=dict, repr=False)

    def rows(self):
        return list(zip(self.k_values, self.inertias, self.silhouettes))


SELECTION_RULE = "silhouette argmax within elbow band"


def sweep_k(m, k_range=(1, 20), seed=0, restarts=10, silhouette_sample=None, n_jobs=1,
            band_fraction=0.9):
    """Fit every k in ``k_range`` (inclusive) and pick the number of states.

    Silhouette is computed for k >= 2, optionally on a seeded subsample of
    ``silhouette_sample`` rows. The chosen k maximises silhouette within the
    elbow band (smaller k on ties); a dataset with zero total inertia is
    flagged degenerate and gets k = 1.
    """
    X = _as_array(m)
    k_lo, k_hi = int(k_range[0]), int(k_range[1])
    if k_lo < 1 or k_hi < k_lo:
        raise ValueError(f"bad k range {k_range}")
    if len(X) < k_hi:
        raise TooFewSamples(f"{len(X)} rows for k up to {k_hi}")
    ks = list(range(k_lo, k_hi + 1))
    sample = None
    if silhouette_sample and silhouette_sample < len(X):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5117]))
        sample = np.sort(rng.choice(len(X), silhouette_sample, replace=False))
    models, inertias, sils = {}, [], []
    for k in ks:
        model = kmeans_fit(X, k, seed, restarts, n_jobs=n_jobs)
        models[k] = model
        inertias.append(model.inertia)
        if k < 2:
            sils.append(None)
            continue
        lab = model.labels if sample is None else model.labels[sample]
        Xs = X if sample is None else X[sample]
        if len(np.unique(lab)) < 2:
            sils.append(0.0)
        else:
            sils.append(silhouette_score(Xs, lab))
        log.debug("k=%d inertia=%.6g silhouette=%.4f", k, model.inertia, sils[-1])

    total = float(((X - X.mean(axis=0)) ** 2).sum()) if len(X) else 0.0
    if not total > 0:
        return KSweepReport(ks, inertias, sils, ElbowBand(ks[0], ks[-1], False),
                            ks[0], "degenerate data: zero variance",
                            True, models)
    band = detect_elbow(ks, inertias, band_fraction)
    cands = [k for k in ks if band.k_lo <= k <= band.k_hi]
    scored = [(sils[ks.index(k)], -k) for k in cands if sils[ks.index(k)] is not None]
    if scored:
        chosen = -max(scored)[1]
    else:
        chosen = cands[0]
    return KSweepReport(ks, inertias, sils, band, chosen, SELECTION_RULE, False, models)


@dataclass
class StateAssignment:
    timestamps: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.timestamps.shape != self.labels.shape:
            raise ValueError("timestamps and labels differ in length")

    def __len__(self):
        return len(self.labels)

    def distinct(self):
        return int(len(np.unique(self.labels)))


def population_relabel(labels, k):
    """Map old label -> new label so label 0 is the most populous.

    Ties keep the lower original label first.
    """
    pop = np.bincount(np.asarray(labels, dtype=np.int64), minlength=k)
    order = np.argsort(-pop, kind="stable")
    relabel = np.empty(k, dtype=np.int64)
    relabel[order] = np.arange(k)
    return relabel


@dataclass
class StateModel:
    kmeans: KMeansModel
    feature_names: tuple
    scaling: Scaling | None
    training_window: tuple
    relabel_map: np.ndarray
    populations: np.ndarray  # indexed by relabelled state

    @property
    def k(self):
        return self.kmeans.k

    @property
    def centroids(self):
        """Centroids indexed by relabelled state, in model (scaled) space."""
        inv = np.argsort(self.relabel_map)
        return self.kmeans.centroids[inv]

    def centroids_original_units(self):
        c = self.centroids
        if self.scaling is None:
            return c
        return c * self.scaling.std + self.scaling.mean

    def to_dict(self):
        km = self.kmeans
        return {
            "format": "powerstate.StateModel",
            "version": STATE_MODEL_VERSION,
            "k": km.k,
            "feature_names": list(self.feature_names),
            "scaling": None if self.scaling is None else self.scaling.to_dict(),
            "centroids": km.centroids.tolist(),
            "relabel_map": self.relabel_map.tolist(),
            "populations": self.populations.tolist(),
            "training_window": list(self.training_window),
            "seed": km.seed,
            "restarts": km.restarts,
            "inertia": km.inertia,
            "iterations_run": km.iterations_run,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d):
        if d.get("version") != STATE_MODEL_VERSION:
            raise ValueError(f"unsupported state model version {d.get('version')}")
        C = np.asarray(d["centroids"], dtype=np.float64)
        km = KMeansModel(int(d["k"]), C, float(d["inertia"]), int(d["iterations_run"]),
                         int(d["seed"]), int(d["restarts"]), np.empty(0, np.int64))
        scaling = None if d["scaling"] is None else Scaling.from_dict(d["scaling"])
        return cls(km, tuple(d["feature_names"]), scaling, tuple(d["training_window"]),
                   np.asarray(d["relabel_map"], dtype=np.int64),
                   np.asarray(d["populations"], dtype=np.int64))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def fit_state_model(m, sweep_or_k, seed=0, restarts=10, training_window=None, n_jobs=1):
    """Fit the final K-Means model and order its labels by population.

    ``sweep_or_k`` is a :class:`KSweepReport` (its chosen k, and its fitted
    model when available, are reused) or an explicit k.
    """
    if isinstance(sweep_or_k, KSweepReport):
        k = sweep_or_k.chosen_k
        km = sweep_or_k.models.get(k) or kmeans_fit(m, k, seed, restarts, n_jobs=n_jobs)
    else:
        k = int(sweep_or_k)
        km = kmeans_fit(m, k, seed, restarts, n_jobs=n_jobs)
    relabel = population_relabel(km.labels, k)
    pops = np.bincount(relabel[km.labels], minlength=k)
    if training_window is None and isinstance(m, FeatureMatrix) and len(m):
        training_window = (int(m.timestamps[0]), int(m.timestamps[-1]))
    names = m.feature_names if isinstance(m, FeatureMatrix) else tuple(
        f"f{i}" for i in range(_as_array(m).shape[1]))
    scaling = m.scaling if isinstance(m, FeatureMatrix) else None
    return StateModel(km, tuple(names), scaling, tuple(training_window or ()), relabel, pops)


def model_space(model, m):
    """Feature values of ``m`` in the state model's (possibly scaled) space."""
    if tuple(m.feature_names) != tuple(model.feature_names):
        raise FeatureMismatch(model.feature_names, m.feature_names)
    if model.scaling is None or m.scaling is not None:
        return m.values
    return model.scaling.apply(m.values)


def assign_nearest(model, m):
    """Nearest-centroid state of each row, in population-ordered labels.

    Unscaled input is scaled with the model's stored parameters first. Ties
    go to the lower pre-relabel centroid index.
    """
    X = model_space(model, m)
    if len(X) == 0:
        return StateAssignment(np.empty(0, np.int64), np.empty(0, np.int64))
    raw, _ = kernels.nearest_centroid(X, model.kmeans.centroids)
    return StateAssignment(m.timestamps, model.relabel_map[raw])
