import numpy as np
import pytest

from powerstate.features import FeatureMatrix
from powerstate.frame import MS_PER_MINUTE, TimestampedFrame
from powerstate.ingest import ECD_CHANNELS, HARMONICS_CHANNELS


def frame(values, ts=None, names=None, period=1000):
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    n, c = values.shape
    ts = np.arange(n, dtype=np.int64) * period if ts is None else np.asarray(ts, np.int64)
    names = names or tuple(f"c{i}" for i in range(c))
    return TimestampedFrame(tuple(names), ts, values, period)


def matrix(values, names=None, t0=0):
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    names = names or tuple(f"f{i}" for i in range(values.shape[1]))
    ts = t0 + MS_PER_MINUTE * np.arange(len(values), dtype=np.int64)
    return FeatureMatrix(ts, tuple(names), values)


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(str(x) for x in r) + "\n")
    return path


def blobs(rng, centers, per, sigma):
    centers = np.asarray(centers, dtype=np.float64)
    X = np.concatenate([c + sigma * rng.standard_normal((per, centers.shape[1])) for c in centers])
    y = np.repeat(np.arange(len(centers)), per)
    return X, y


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def ecd_header():
    return ["Time Stamp", *ECD_CHANNELS]


@pytest.fixture
def harmonics_header():
    return ["Time Stamp", *HARMONICS_CHANNELS]
