"""Hot-loop backend selection.

The compiled extension is used when it imports; otherwise the numpy versions
are used. Setting ``POWERSTATE_PURE_PYTHON=1`` forces the fallback.
"""
import os

import numpy as np

from . import _pykernels

if os.environ.get("POWERSTATE_PURE_PYTHON"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"


def available_backends():
    out = {"python": _pykernels}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:  # pragma: no cover
        pass
    return out


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _i64(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def nearest_centroid(X, C, impl=None):
    return (impl or _impl).nearest_centroid(_f64(X), _f64(C))


def silhouette_samples(X, labels, n_labels, impl=None):
    return (impl or _impl).silhouette_samples(_f64(X), _i64(labels), int(n_labels))


def best_split(X, y, idx, features, n_classes, max_features, min_samples_leaf, impl=None):
    return (impl or _impl).best_split(
        X, y, _i64(idx), _i64(features), int(n_classes), int(max_features), int(min_samples_leaf)
    )


def tree_apply(X, feature, threshold, left, right, impl=None):
    return (impl or _impl).tree_apply(_f64(X), _i64(feature), _f64(threshold), _i64(left), _i64(right))
