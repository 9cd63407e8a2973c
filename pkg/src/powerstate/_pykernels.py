"""Pure numpy fallbacks for the compiled kernels in ``_ckernels.pyx``.

Each function has the same signature, tie-breaking and return types as its
compiled counterpart.
"""
import numpy as np
from scipy.spatial.distance import cdist

_BLOCK = 512


def nearest_centroid(X, C):
    X = np.ascontiguousarray(X, dtype=np.float64)
    C = np.ascontiguousarray(C, dtype=np.float64)
    n = X.shape[0]
    labels = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    for lo in range(0, n, _BLOCK):
        hi = min(lo + _BLOCK, n)
        d2 = ((X[lo:hi, None, :] - C[None, :, :]) ** 2).sum(axis=2)
        # argmin returns the first minimum: lower index wins ties
        labels[lo:hi] = np.argmin(d2, axis=1)
        dist[lo:hi] = d2[np.arange(hi - lo), labels[lo:hi]]
    return labels, dist


def silhouette_samples(X, labels, n_labels):
    X = np.ascontiguousarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = X.shape[0]
    counts = np.bincount(labels, minlength=n_labels).astype(np.float64)
    out = np.zeros(n, dtype=np.float64)
    for lo in range(0, n, _BLOCK):
        hi = min(lo + _BLOCK, n)
        D = cdist(X[lo:hi], X)
        sums = np.zeros((hi - lo, n_labels))
        for c in range(n_labels):
            sums[:, c] = D[:, labels == c].sum(axis=1)
        own = labels[lo:hi]
        rows = np.arange(hi - lo)
        with np.errstate(divide="ignore", invalid="ignore"):
            a = sums[rows, own] / (counts[own] - 1)
            means = sums / counts
        means[rows, own] = np.inf
        means[:, counts == 0] = np.inf
        b = means.min(axis=1)
        m = np.maximum(a, b)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(m == 0, 0.0, (b - a) / m)
        s[counts[own] <= 1] = 0.0
        out[lo:hi] = s
    return out


def best_split(X, y, idx, features, n_classes, max_features, min_samples_leaf):
    n = len(idx)
    best_f, best_thr, best_score = -1, 0.0, -np.inf
    visited = 0
    ynode = y[idx]
    total = np.bincount(ynode, minlength=n_classes).astype(np.float64)
    onehot = np.zeros((n, n_classes))
    for f in features:
        if visited >= max_features:
            break
        v = X[idx, f]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        if vs[0] == vs[-1]:
            continue
        visited += 1
        onehot[:] = 0.0
        onehot[np.arange(n), ynode[order]] = 1.0
        left = np.cumsum(onehot, axis=0)[:-1]
        right = total - left
        sl = (left * left).sum(axis=1)
        sr = (right * right).sum(axis=1)
        nl = np.arange(1, n, dtype=np.float64)
        nr = n - nl
        score = sl / nl + sr / nr
        valid = (vs[:-1] != vs[1:]) & (nl >= min_samples_leaf) & (nr >= min_samples_leaf)
        if not valid.any():
            continue
        score = np.where(valid, score, -np.inf)
        i = int(np.argmax(score))
        if score[i] > best_score:
            best_score = float(score[i])
            best_f = int(f)
            thr = 0.5 * (vs[i] + vs[i + 1])
            if thr >= vs[i + 1]:
                thr = vs[i]
            best_thr = float(thr)
    return best_f, best_thr, best_score


def tree_apply(X, feature, threshold, left, right):
    n = X.shape[0]
    node = np.zeros(n, dtype=np.int64)
    active = feature[node] >= 0
    while active.any():
        rows = np.flatnonzero(active)
        nd = node[rows]
        go_left = X[rows, feature[nd]] <= threshold[nd]
        node[rows] = np.where(go_left, left[nd], right[nd])
        active[rows] = feature[node[rows]] >= 0
    return node
