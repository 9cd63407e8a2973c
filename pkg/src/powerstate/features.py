"""Observation matrix construction: odd current harmonics at 1-minute cadence."""
from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .errors import EmptyWindowSpan, FeatureMismatch, MissingColumn
from .frame import MS_PER_MINUTE, TimestampedFrame
from .ingest import format_timestamps, parse_timestamps

ODD_ORDERS = tuple(range(3, 32, 2))
PHASES = ("A", "B", "C")
ISO_FORMAT = "%Y-%m-%d %H:%M:%S"


def odd_current_channels(phase_mode="mean-of-phases"):
    """Input channels needed and output channel names for a phase mode."""
    mode = _phase_mode(phase_mode)
    needed = tuple(f"{p}I_HR{o}" for p in PHASES for o in ODD_ORDERS)
    if mode == "concat-phases":
        return needed, needed
    return needed, tuple(f"I_HR{o}" for o in ODD_ORDERS)


def _phase_mode(mode):
    aliases = {"mean": "mean-of-phases", "concat": "concat-phases"}
    mode = aliases.get(mode, mode)
    if mode not in ("mean-of-phases", "concat-phases"):
        raise ValueError(f"unknown phase mode {mode!r}")
    return mode


@dataclass(frozen=True)
class Scaling:
    """Per-feature affine map (x - mean) / std.

    Zero-variance features are stored with mean 0 and std 1 so they pass
    through untouched; ``flagged`` marks them.
    """

    mean: np.ndarray
    std: np.ndarray
    flagged: tuple = ()

    def apply(self, values):
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "flagged": list(self.flagged)}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64),
                   tuple(d.get("flagged", ())))


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    timestamps: np.ndarray
    feature_names: tuple
    values: np.ndarray
    scaling: Scaling | None = None
    empty_windows: tuple = ()  # window starts dropped for lack of data
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64).reshape(-1)
        vals = np.asarray(self.values, dtype=np.float64)
        names = tuple(self.feature_names)
        if vals.ndim != 2 or vals.shape != (len(ts), len(names)):
            raise ValueError(f"values shape {vals.shape} vs {len(ts)} rows x {len(names)} features")
        if np.isnan(vals).any():
            raise ValueError("FeatureMatrix cannot hold missing values")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "feature_names", names)

    def __len__(self):
        return len(self.timestamps)

    def rows(self, mask_or_index):
        return replace(self, timestamps=self.timestamps[mask_or_index],
                       values=self.values[mask_or_index], empty_windows=())

    def between(self, start, end):
        """Rows with start <= t < end."""
        return self.rows((self.timestamps >= start) & (self.timestamps < end))

    def check_features(self, names):
        if tuple(names) != self.feature_names:
            raise FeatureMismatch(names, self.feature_names)


def select_odd_current_harmonics(frame, phase_mode="mean-of-phases"):
    """Odd current harmonics 3..31.

    ``mean-of-phases`` gives 15 channels ``I_HRo = (AI_HRo + BI_HRo + CI_HRo) / 3``;
    ``concat-phases`` keeps all 45 per-phase channels.
    """
    mode = _phase_mode(phase_mode)
    needed, out_names = odd_current_channels(mode)
    for name in needed:
        if name not in frame.channel_names:
            raise MissingColumn(name)
    sub = frame.select(needed)
    if mode == "concat-phases":
        return sub
    v = sub.values.reshape(len(sub), 3, len(ODD_ORDERS))
    mean = (v[:, 0] + v[:, 1] + v[:, 2]) / 3
    return TimestampedFrame(out_names, frame.timestamps, mean, frame.nominal_period,
                            frame.duplicates_dropped, dict(frame.meta))


def resample_frame(frame, period=MS_PER_MINUTE):
    """Mean of each channel over wall-clock-aligned windows [t, t + period).

    Only windows containing at least one row are emitted. NaN cells are
    skipped; a channel with no value in a window stays NaN.
    """
    if len(frame) == 0:
        return TimestampedFrame(frame.channel_names, np.empty(0, np.int64),
                                np.empty((0, frame.n_channels)), period)
    win = np.floor_divide(frame.timestamps, period)
    starts = np.flatnonzero(np.concatenate([[True], win[1:] != win[:-1]]))
    vals = frame.values
    ok = ~np.isnan(vals)
    sums = np.add.reduceat(np.where(ok, vals, 0.0), starts, axis=0)
    counts = np.add.reduceat(ok.astype(np.int64), starts, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / counts, np.nan)
    return TimestampedFrame(frame.channel_names, win[starts] * period, means, period,
                            0, dict(frame.meta))


def resample_mean(frame, period=MS_PER_MINUTE):
    """1-minute observation matrix from a native-cadence frame.

    Windows with no rows, or with a channel that has no value, are left out
    and listed in ``empty_windows`` (only those between the first and last
    emitted window).
    """
    r = resample_frame(frame, period)
    complete = ~np.isnan(r.values).any(axis=1)
    if not complete.any():
        raise EmptyWindowSpan("no window has data for every feature")
    ts = r.timestamps[complete]
    full = np.arange(ts[0], ts[-1] + period, period, dtype=np.int64)
    empty = np.setdiff1d(full, ts, assume_unique=True)
    return FeatureMatrix(ts, r.channel_names, r.values[complete], None,
                         tuple(int(t) for t in empty))


def fit_scaling(values, names=None):
    values = np.asarray(values, dtype=np.float64)
    mean = values.mean(axis=0)
    std = values.std(axis=0)  # population convention (ddof=0)
    zero = ~(std > 0)
    flagged = tuple(np.flatnonzero(zero).tolist() if names is None
                    else [names[i] for i in np.flatnonzero(zero)])
    mean = np.where(zero, 0.0, mean)
    std = np.where(zero, 1.0, std)
    return Scaling(mean, std, flagged)


def standardize(m):
    """Scale each feature to mean 0, population stddev 1.

    Zero-variance features are left unchanged and listed in
    ``scaling.flagged``. The fitted :class:`Scaling` is stored on the result
    for reuse on assignment-time data via :func:`apply_scaling`.
    """
    s = fit_scaling(m.values, m.feature_names)
    return replace(m, values=s.apply(m.values), scaling=s)


def apply_scaling(m, scaling):
    if scaling is None:
        return m
    return replace(m, values=scaling.apply(m.values), scaling=scaling)


def write_feature_csv(m, path, header_lines=()):
    from .util import atomic_write

    df = pd.DataFrame(m.values, columns=list(m.feature_names))
    df.insert(0, "timestamp", format_timestamps(m.timestamps, ISO_FORMAT))
    body = df.to_csv(index=False, lineterminator="\n")
    atomic_write(path, "".join(f"# {h}\n" for h in header_lines) + body)


def read_feature_csv(path):
    df = pd.read_csv(os.fspath(path), comment="#", dtype={"timestamp": str},
                     float_precision="round_trip")
    ts = parse_timestamps(df["timestamp"].to_numpy(), ISO_FORMAT)
    names = tuple(c for c in df.columns if c != "timestamp")
    return FeatureMatrix(ts, names, df[list(names)].to_numpy(dtype=np.float64))
