"""Random-forest state assignment and F1 evaluation.

Trees use axis-aligned threshold splits chosen by Gini impurity on bootstrap
samples. Each tree draws from its own generator seeded with (seed, tree
index), so the forest is the same whether trees are built serially or in
parallel.
"""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .cluster import StateAssignment, assign_nearest
from .errors import FeatureMismatch, LengthMismatch, SingleClass

FOREST_MODEL_VERSION = 1


@dataclass
class Tree:
    feature: np.ndarray  # -1 at leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # n_nodes x n_classes bootstrap class counts
    gain: np.ndarray  # Gini decrease at internal nodes, 0 at leaves

    @property
    def n_nodes(self):
        return len(self.feature)

    def leaf_class(self):
        # argmax picks the lowest class index on ties
        return np.argmax(self.counts, axis=1)

    def to_dict(self):
        return {k: getattr(self, k).tolist()
                for k in ("feature", "threshold", "left", "right", "counts", "gain")}

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray(d["feature"], np.int64), np.asarray(d["threshold"], np.float64),
            np.asarray(d["left"], np.int64), np.asarray(d["right"], np.int64),
            np.asarray(d["counts"], np.int64).reshape(len(d["feature"]), -1),
            np.asarray(d["gain"], np.float64),
        )


@dataclass
class ForestModel:
    trees: list
    classes: np.ndarray
    feature_names: tuple
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 1
    max_features: int = 1
    seed: int = 0

    def to_dict(self):
        return {
            "format": "powerstate.ForestModel",
            "version": FOREST_MODEL_VERSION,
            "classes": self.classes.tolist(),
            "feature_names": list(self.feature_names),
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
            "max_features": self.max_features,
            "seed": self.seed,
            "trees": [t.to_dict() for t in self.trees],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"

    @classmethod
    def from_dict(cls, d):
        if d.get("version") != FOREST_MODEL_VERSION:
            raise ValueError(f"unsupported forest version {d.get('version')}")
        return cls([Tree.from_dict(t) for t in d["trees"]], np.asarray(d["classes"], np.int64),
                   tuple(d["feature_names"]), d["n_trees"], d["max_depth"],
                   d["min_samples_leaf"], d["max_features"], d["seed"])

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def digest(self):
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


def _resolve_max_features(value, n):
    if value in (None, "sqrt"):
        return max(1, math.ceil(math.sqrt(n)))
    if value == "all":
        return n
    return max(1, min(int(value), n))


def build_tree(X, y, n_classes, rng, max_depth=None, min_samples_leaf=1, max_features=1,
               bootstrap=True):
    """Grow one tree on a bootstrap sample of (X, y).

    X must be C-contiguous float64 and y int64 class indices.
    """
    n, nf = X.shape
    idx0 = rng.integers(0, n, n) if bootstrap else np.arange(n)
    feature, threshold, left, right, counts, gain = [], [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(np.bincount(y[idx], minlength=n_classes))
        gain.append(0.0)
        return len(feature) - 1

    stack = [(new_node(idx0), idx0, 0)]
    while stack:
        node, idx, depth = stack.pop()
        cnt = counts[node]
        m = len(idx)
        if (np.count_nonzero(cnt) <= 1 or m < 2 * min_samples_leaf
                or (max_depth is not None and depth >= max_depth)):
            continue
        order = rng.permutation(nf)
        f, thr, score = kernels.best_split(X, y, idx, order, n_classes, max_features,
                                           min_samples_leaf)
        if f < 0:
            continue
        parent = float((cnt.astype(np.float64) ** 2).sum()) / m
        if not score > parent:
            continue
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node] = int(f)
        threshold[node] = float(thr)
        gain[node] = (score - parent) / m
        ln = new_node(li)
        rn = new_node(ri)
        left[node], right[node] = ln, rn
        # right pushed first so the left subtree is numbered first
        stack.append((rn, ri, depth + 1))
        stack.append((ln, li, depth + 1))
    return Tree(np.array(feature, np.int64), np.array(threshold, np.float64),
                np.array(left, np.int64), np.array(right, np.int64),
                np.array(counts, np.int64).reshape(len(feature), n_classes),
                np.array(gain, np.float64))


def train_forest(m, labels, n_trees=100, max_depth=None, min_samples_leaf=1,
                 max_features="sqrt", seed=0, n_jobs=1):
    """Random forest on ``m`` with target ``labels`` (StateAssignment or array)."""
    y_raw = labels.labels if isinstance(labels, StateAssignment) else np.asarray(labels)
    if len(y_raw) != len(m):
        raise LengthMismatch(f"{len(y_raw)} labels for {len(m)} rows")
    classes, y = np.unique(y_raw, return_inverse=True)
    if len(classes) < 2:
        raise SingleClass("training labels contain a single class")
    X = np.ascontiguousarray(m.values, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    mf = _resolve_max_features(max_features, X.shape[1])

    def grow(t):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(t)]))
        return build_tree(X, y, len(classes), rng, max_depth, min_samples_leaf, mf)

    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            trees = list(ex.map(grow, range(n_trees)))
    else:
        trees = [grow(t) for t in range(n_trees)]
    return ForestModel(trees, classes.astype(np.int64), tuple(m.feature_names), n_trees,
                       max_depth, min_samples_leaf, mf, int(seed))


def vote_counts(model, X):
    X = np.ascontiguousarray(X, dtype=np.float64)
    votes = np.zeros((len(X), len(model.classes)), dtype=np.int64)
    rows = np.arange(len(X))
    for tree in model.trees:
        leaf = kernels.tree_apply(X, tree.feature, tree.threshold, tree.left, tree.right)
        votes[rows, tree.leaf_class()[leaf]] += 1
    return votes


def predict(model, m):
    """Majority vote over trees; ties go to the lower label."""
    if tuple(m.feature_names) != tuple(model.feature_names):
        raise FeatureMismatch(model.feature_names, m.feature_names)
    if len(m) == 0:
        return StateAssignment(np.empty(0, np.int64), np.empty(0, np.int64))
    votes = vote_counts(model, m.values)
    return StateAssignment(m.timestamps, model.classes[np.argmax(votes, axis=1)])


AVERAGING = ("macro", "weighted", "micro")


@dataclass
class EvaluationReport:
    f1: float
    averaging: str
    f1_macro: float
    f1_weighted: float
    f1_micro: float
    labels: list
    per_class_f1: dict
    confusion: np.ndarray  # rows: truth, columns: prediction
    support: dict
    date: str | None = None
    n_states_pred: int = 0
    n_states_truth: int = 0
    single_class: bool = False
    extra: dict = field(default_factory=dict)


def f1_score(pred, truth, averaging="macro"):
    """Per-class and aggregate F1 of ``pred`` against ``truth``.

    Per-class F1 is 2TP / (2TP + FP + FN), i.e. 2PR/(P+R), taken as 0 when
    the class has no true positives. Labels are the union of both inputs.
    """
    if averaging not in AVERAGING:
        raise ValueError(f"averaging must be one of {AVERAGING}")
    p = pred.labels if isinstance(pred, StateAssignment) else np.asarray(pred)
    t = truth.labels if isinstance(truth, StateAssignment) else np.asarray(truth)
    p = np.asarray(p, dtype=np.int64)
    t = np.asarray(t, dtype=np.int64)
    if len(p) != len(t):
        raise LengthMismatch(f"{len(p)} predictions vs {len(t)} truth labels")
    labels = np.union1d(p, t)
    L = len(labels)
    pi = np.searchsorted(labels, p)
    ti = np.searchsorted(labels, t)
    conf = np.zeros((L, L), dtype=np.int64)
    np.add.at(conf, (ti, pi), 1)
    tp = np.diag(conf)
    fp = conf.sum(axis=0) - tp
    fn = conf.sum(axis=1) - tp
    support = conf.sum(axis=1)
    denom = 2 * tp + fp + fn
    per = np.where(tp > 0, 2 * tp / np.maximum(denom, 1), 0.0)
    n = len(t)
    if L == 0:
        macro = weighted = micro = 0.0
    else:
        macro = float(per.mean())
        weighted = float((per * support).sum() / n)
        stp = int(tp.sum())
        micro = 2 * stp / (2 * stp + int(fp.sum()) + int(fn.sum())) if stp else 0.0
    agg = {"macro": macro, "weighted": weighted, "micro": float(micro)}
    return EvaluationReport(
        agg[averaging], averaging, macro, weighted, float(micro), labels.tolist(),
        {int(lab): float(f) for lab, f in zip(labels, per)}, conf,
        {int(lab): int(s) for lab, s in zip(labels, support)},
    )


def evaluate_day(forest, state_model, day_features, date=None, averaging="macro"):
    """Score forest predictions against nearest-centroid states for one day."""
    truth = assign_nearest(state_model, day_features)
    pred = predict(forest, day_features)
    rep = f1_score(pred, truth, averaging)
    rep.date = date
    rep.n_states_pred = pred.distinct()
    rep.n_states_truth = truth.distinct()
    rep.single_class = rep.n_states_truth <= 1
    rep.extra = {"pred": pred, "truth": truth}
    return rep
