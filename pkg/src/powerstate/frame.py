"""Time-indexed table of named numeric channels.

MISSING cells are stored as NaN. Timestamps are epoch milliseconds (UTC) in an
int64 array and must be strictly increasing. Arrays are made read-only on
construction so a frame can be shared freely between threads.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MISSING = np.nan
MS_PER_MINUTE = 60_000
MS_PER_DAY = 86_400_000


def _readonly(a):
    # arrays that are already read-only are adopted as-is; parsers rely on this
    # to avoid doubling peak memory on large inputs
    if isinstance(a, np.ndarray) and not a.flags.writeable:
        return a
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class TimestampedFrame:
    channel_names: tuple
    timestamps: np.ndarray
    values: np.ndarray
    nominal_period: int
    duplicates_dropped: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        names = tuple(str(c) for c in self.channel_names)
        ts = np.asarray(self.timestamps, dtype=np.int64)
        if ts.ndim != 1:
            ts = ts.reshape(-1)
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim == 1 and len(names) == 0:
            vals = vals.reshape(len(ts), 0)
        if vals.ndim != 2:
            raise ValueError("values must be 2-D")
        if vals.shape != (len(ts), len(names)):
            raise ValueError(
                f"values shape {vals.shape} does not match "
                f"{len(ts)} rows x {len(names)} channels"
            )
        if len(set(names)) != len(names):
            raise ValueError("duplicate channel names")
        if len(ts) > 1 and not np.all(np.diff(ts) > 0):
            raise ValueError("timestamps must be strictly increasing")
        if int(self.nominal_period) <= 0:
            raise ValueError("nominal_period must be positive")
        object.__setattr__(self, "channel_names", names)
        object.__setattr__(self, "timestamps", _readonly(ts))
        object.__setattr__(self, "values", _readonly(vals))
        object.__setattr__(self, "nominal_period", int(self.nominal_period))

    def __len__(self):
        return len(self.timestamps)

    @property
    def n_channels(self):
        return len(self.channel_names)

    def column(self, name):
        try:
            j = self.channel_names.index(name)
        except ValueError:
            from .errors import MissingColumn

            raise MissingColumn(name) from None
        return self.values[:, j]

    def select(self, names):
        from .errors import MissingColumn

        idx = []
        for n in names:
            if n not in self.channel_names:
                raise MissingColumn(n)
            idx.append(self.channel_names.index(n))
        return TimestampedFrame(
            tuple(names), self.timestamps, self.values[:, idx], self.nominal_period,
            self.duplicates_dropped, dict(self.meta),
        )

    def between(self, start, end):
        """Rows with start <= t < end."""
        lo = np.searchsorted(self.timestamps, start, side="left")
        hi = np.searchsorted(self.timestamps, end, side="left")
        return TimestampedFrame(
            self.channel_names, self.timestamps[lo:hi], self.values[lo:hi],
            self.nominal_period, 0, dict(self.meta),
        )

    def missing_mask(self):
        return np.isnan(self.values)

    def equals(self, other):
        """Same channels, timestamps, values and MISSING markers."""
        return (
            self.channel_names == other.channel_names
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    def __repr__(self):
        return (
            f"TimestampedFrame(rows={len(self)}, channels={self.n_channels}, "
            f"period={self.nominal_period}ms)"
        )


def empty_frame(channel_names, nominal_period):
    return TimestampedFrame(
        tuple(channel_names), np.empty(0, np.int64),
        np.empty((0, len(channel_names))), nominal_period,
    )
