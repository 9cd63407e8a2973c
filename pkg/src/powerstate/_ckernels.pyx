# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Semantics mirror ``_pykernels`` exactly."""
import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt, INFINITY
from libc.stdlib cimport malloc, free, qsort

cnp.import_array()


def nearest_centroid(const double[:, ::1] X, const double[:, ::1] C):
    """Index of the nearest centroid (squared Euclidean) and that distance.

    Ties go to the lower centroid index.
    """
    cdef Py_ssize_t n = X.shape[0], k = C.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j, f
    cdef double best, acc, diff
    cdef Py_ssize_t arg
    labels_arr = np.empty(n, dtype=np.int64)
    dist_arr = np.empty(n, dtype=np.float64)
    cdef long long[::1] labels = labels_arr
    cdef double[::1] dist = dist_arr
    with nogil:
        for i in range(n):
            best = INFINITY
            arg = 0
            for j in range(k):
                acc = 0.0
                for f in range(d):
                    diff = X[i, f] - C[j, f]
                    acc = acc + diff * diff
                if acc < best:
                    best = acc
                    arg = j
            labels[i] = arg
            dist[i] = best
    return labels_arr, dist_arr


def silhouette_samples(const double[:, ::1] X, const long long[::1] labels, Py_ssize_t n_labels):
    """Per-point silhouette coefficient with Euclidean distance.

    Points in singleton clusters get 0. Labels must be in [0, n_labels).
    """
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j, f, c, li
    cdef double acc, diff, a, b, m
    counts_arr = np.bincount(np.asarray(labels), minlength=n_labels).astype(np.float64)
    cdef double[::1] counts = counts_arr
    sums_arr = np.zeros(n_labels, dtype=np.float64)
    cdef double[::1] sums = sums_arr
    out_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n):
            for c in range(n_labels):
                sums[c] = 0.0
            for j in range(n):
                acc = 0.0
                for f in range(d):
                    diff = X[i, f] - X[j, f]
                    acc = acc + diff * diff
                sums[labels[j]] += sqrt(acc)
            li = labels[i]
            if counts[li] <= 1:
                out[i] = 0.0
                continue
            a = sums[li] / (counts[li] - 1)
            b = INFINITY
            for c in range(n_labels):
                if c != li and counts[c] > 0:
                    m = sums[c] / counts[c]
                    if m < b:
                        b = m
            m = a if a > b else b
            out[i] = 0.0 if m == 0.0 else (b - a) / m
    return out_arr


cdef struct ValCls:
    double v
    long long c


cdef int _cmp_valcls(const void* p, const void* q) noexcept nogil:
    cdef double a = (<ValCls*>p).v
    cdef double b = (<ValCls*>q).v
    if a < b:
        return -1
    if a > b:
        return 1
    return 0


def best_split(const double[:, ::1] X, const long long[::1] y, const long long[::1] idx,
               const long long[::1] features, Py_ssize_t n_classes,
               Py_ssize_t max_features, Py_ssize_t min_samples_leaf):
    """Best Gini split of the node holding rows ``idx``.

    Features are visited in the given order; features constant within the
    node are skipped without counting towards ``max_features``. The score
    maximised is sum(left_counts**2)/n_left + sum(right_counts**2)/n_right,
    which is the Gini gain up to a node-constant shift. Returns
    (feature, threshold, score); feature is -1 when no split is possible.
    """
    cdef Py_ssize_t n = idx.shape[0], nf = features.shape[0]
    cdef Py_ssize_t t, i, fi, c, visited = 0
    cdef long long f, best_f = -1
    cdef double best_thr = 0.0, best_score = -INFINITY
    cdef double sl, sr, score, thr, nl, nr
    cdef ValCls* buf = <ValCls*>malloc(n * sizeof(ValCls))
    cdef double* left = <double*>malloc(n_classes * sizeof(double))
    cdef double* total = <double*>malloc(n_classes * sizeof(double))
    if buf == NULL or left == NULL or total == NULL:
        free(buf); free(left); free(total)
        raise MemoryError()
    try:
        with nogil:
            for c in range(n_classes):
                total[c] = 0.0
            for i in range(n):
                total[y[idx[i]]] += 1.0
            for t in range(nf):
                if visited >= max_features:
                    break
                f = features[t]
                for i in range(n):
                    buf[i].v = X[idx[i], f]
                    buf[i].c = y[idx[i]]
                qsort(buf, n, sizeof(ValCls), _cmp_valcls)
                if buf[0].v == buf[n - 1].v:
                    continue
                visited += 1
                for c in range(n_classes):
                    left[c] = 0.0
                # running sums of squared class counts
                sl = 0.0
                sr = 0.0
                for c in range(n_classes):
                    sr += total[c] * total[c]
                for i in range(n - 1):
                    c = buf[i].c
                    sl += 2.0 * left[c] + 1.0
                    sr -= 2.0 * (total[c] - left[c]) - 1.0
                    left[c] += 1.0
                    if buf[i].v == buf[i + 1].v:
                        continue
                    if i + 1 < min_samples_leaf or n - i - 1 < min_samples_leaf:
                        continue
                    nl = <double>(i + 1)
                    nr = <double>(n - i - 1)
                    score = sl / nl + sr / nr
                    if score > best_score:
                        best_score = score
                        best_f = f
                        thr = 0.5 * (buf[i].v + buf[i + 1].v)
                        if thr >= buf[i + 1].v:
                            thr = buf[i].v
                        best_thr = thr
    finally:
        free(buf)
        free(left)
        free(total)
    return best_f, best_thr, best_score


def tree_apply(const double[:, ::1] X, const long long[::1] feature, const double[::1] threshold,
               const long long[::1] left, const long long[::1] right):
    """Leaf node index reached by each row."""
    cdef Py_ssize_t n = X.shape[0], i
    cdef long long node
    out_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] out = out_arr
    with nogil:
        for i in range(n):
            node = 0
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[i] = node
    return out_arr
