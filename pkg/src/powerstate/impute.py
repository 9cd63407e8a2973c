"""Same-time-of-day imputation.

A missing grid cell is filled with the mean of the nearest available values
at the same time of day on earlier and later days. Days are scanned outward
one at a time up to a horizon; donors are taken only from the input frame,
never from cells filled earlier in the same pass.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidRange, UnfillableGap
from .frame import MS_PER_DAY, TimestampedFrame
from .ingest import grid_presence

_BLOCK_CHANNELS = 16


class Fallback(str, Enum):
    LINEAR = "linear-interpolate"
    NEAREST = "carry-nearest"
    LEAVE = "leave-missing"


@dataclass(frozen=True)
class ImputationPolicy:
    max_lookback_days: int = 7
    max_lookahead_days: int = 7
    fallback: Fallback = Fallback.LINEAR
    donors_per_side: int = 1
    match_day_type: bool = False  # weekday donors for weekdays, weekend for weekends

    def __post_init__(self):
        if self.max_lookback_days < 1 or self.max_lookahead_days < 1:
            raise ValueError("horizons must be >= 1 day")
        if self.donors_per_side < 1:
            raise ValueError("donors_per_side must be >= 1")
        object.__setattr__(self, "fallback", Fallback(self.fallback))


@dataclass(frozen=True)
class ImputationResult:
    frame: TimestampedFrame
    imputed: np.ndarray  # bool mask, same shape as frame.values
    fallback_cells: np.ndarray  # subset of ``imputed`` filled by the fallback

    @property
    def imputed_rows(self):
        return int(self.imputed.any(axis=1).sum())


def _is_weekend(ts_ms):
    # 1970-01-01 was a Thursday; Monday == 0
    weekday = (np.floor_divide(ts_ms, MS_PER_DAY) + 3) % 7
    return weekday >= 5


def _grid_index(timestamps, start, n, period):
    """Row index in ``timestamps`` for each grid point, or -1."""
    out = np.full(n, -1, dtype=np.int64)
    if len(timestamps) == 0 or n <= 0:
        return out
    ts2 = 2 * np.asarray(timestamps, dtype=np.int64)
    grid2 = 2 * (start + period * np.arange(n, dtype=np.int64))
    idx = np.searchsorted(ts2, grid2 - period, side="left")
    ok = idx < len(ts2)
    ok[ok] = ts2[idx[ok]] < grid2[ok] + period
    out[ok] = idx[ok]
    return out


def snap_to_grid(frame, start, end, period, columns=None):
    """Values on the grid start + i*period (<= end); NaN where no row is near."""
    n = max((end - start) // period + 1, 0)
    cols = np.arange(frame.n_channels) if columns is None else np.asarray(columns)
    out = np.full((n, len(cols)), np.nan)
    where = _grid_index(frame.timestamps, start, n, period)
    ok = where >= 0
    out[ok] = frame.values[np.ix_(where[ok], cols)]
    return out


def _scan_side(ext, target, step, horizon, want, weekend, ext_weekend):
    """Sum and count of up to ``want`` donors per cell, scanning day by day."""
    n, c = len(target), ext.shape[1]
    total = np.zeros((n, c))
    count = np.zeros((n, c), dtype=np.int64)
    for d in range(1, horizon + 1):
        src = target + step * d
        inside = (src >= 0) & (src < len(ext))
        if not inside.any():
            break
        rows = np.flatnonzero(inside)
        cand = ext[src[rows]]
        need = count[rows] < want
        use = need & ~np.isnan(cand)
        if weekend is not None:
            use &= (ext_weekend[src[rows]] == weekend[rows])[:, None]
        sub_t = total[rows]
        sub_c = count[rows]
        sub_t[use] += cand[use]
        sub_c[use] += 1
        total[rows] = sub_t
        count[rows] = sub_c
        if (count >= want).all():
            break
    return total, count


def impute_same_timestamp(frame, grid, policy=ImputationPolicy()):
    """Fill every missing cell on ``grid = (start, end, period)``.

    Returns an :class:`ImputationResult`; ``result.frame`` has exactly one row
    per grid point. Cells already present are copied unchanged. With one
    donor per side a cell becomes ``(previous_day + next_day) / 2``; with only
    one side available that donor is used alone; with none the policy's
    fallback applies. Fallback cells never act as donors.
    """
    start, end, period = (int(x) for x in grid)
    if period <= 0 or start > end:
        raise InvalidRange(f"bad grid {grid}")
    if MS_PER_DAY % period:
        raise InvalidRange(f"period {period}ms does not divide a day")
    per_day = MS_PER_DAY // period
    n = (end - start) // period + 1
    # only extend the grid as far as the frame actually reaches
    back = ahead = 0
    if len(frame):
        first, last = int(frame.timestamps[0]), int(frame.timestamps[-1])
        back = min(policy.max_lookback_days, max(0, -(-(start - first) // MS_PER_DAY)))
        ahead = min(policy.max_lookahead_days, max(0, -(-(last - end) // MS_PER_DAY)))
    ext_start = start - back * MS_PER_DAY
    ext_end = end + ahead * MS_PER_DAY
    offset = back * per_day

    values = np.empty((n, frame.n_channels))
    imputed = np.zeros((n, frame.n_channels), dtype=bool)
    ext_weekend = None
    if policy.match_day_type:
        grid_ts = ext_start + period * np.arange((ext_end - ext_start) // period + 1, dtype=np.int64)
        ext_weekend = _is_weekend(grid_ts)
    k = policy.donors_per_side
    for lo in range(0, frame.n_channels, _BLOCK_CHANNELS):
        cols = np.arange(lo, min(lo + _BLOCK_CHANNELS, frame.n_channels))
        ext = snap_to_grid(frame, ext_start, ext_end, period, cols)
        block = ext[offset:offset + n].copy()
        missing = np.isnan(block)
        imputed[:, cols] = missing
        rows = np.flatnonzero(missing.any(axis=1))
        if len(rows):
            target = offset + rows
            wk = None if ext_weekend is None else ext_weekend[target]
            s_prev, c_prev = _scan_side(ext, target, -per_day, policy.max_lookback_days, k, wk,
                                        ext_weekend)
            s_next, c_next = _scan_side(ext, target, per_day, policy.max_lookahead_days, k, wk,
                                        ext_weekend)
            cnt = c_prev + c_next
            with np.errstate(invalid="ignore", divide="ignore"):
                if k == 1:
                    # a lone donor passes through unchanged
                    donor = np.where(
                        (c_prev > 0) & (c_next > 0), (s_prev + s_next) / 2,
                        np.where(c_prev > 0, s_prev, s_next),
                    )
                else:
                    donor = (s_prev + s_next) / cnt
            sub = block[rows]
            fill = missing[rows] & (cnt > 0)
            sub[fill] = donor[fill]
            block[rows] = sub
        values[:, cols] = block
        del ext

    still = np.isnan(values)
    fallback_cells = still.copy()
    if still.any():
        if policy.fallback is Fallback.LEAVE:
            partial = _grid_frame(frame, start, period, values)
            bad_rows = np.flatnonzero(still.any(axis=1))
            raise UnfillableGap((start + period * bad_rows).tolist(), partial)
        _fill_along_time(values, policy.fallback, start, period)
    return ImputationResult(_grid_frame(frame, start, period, values), imputed, fallback_cells)


def _fill_along_time(values, mode, start, period):
    x = np.arange(len(values), dtype=np.float64)
    for j in range(values.shape[1]):
        col = values[:, j]
        bad = np.isnan(col)
        if not bad.any():
            continue
        good = ~bad
        if not good.any():
            raise UnfillableGap((start + period * np.flatnonzero(bad)).tolist())
        if mode is Fallback.LINEAR:
            col[bad] = np.interp(x[bad], x[good], col[good])
        else:
            gi = np.flatnonzero(good)
            pos = np.searchsorted(gi, np.flatnonzero(bad))
            lo = gi[np.clip(pos - 1, 0, len(gi) - 1)]
            hi = gi[np.clip(pos, 0, len(gi) - 1)]
            b = np.flatnonzero(bad)
            # nearer neighbour; earlier one on ties
            pick = np.where(np.abs(b - lo) <= np.abs(hi - b), lo, hi)
            col[bad] = col[pick]


def _grid_frame(frame, start, period, values):
    ts = start + period * np.arange(len(values), dtype=np.int64)
    return TimestampedFrame(frame.channel_names, ts, values, period, 0, dict(frame.meta))


def missing_grid_count(frame, start, end, period):
    """Grid points with no row, i.e. what GapReport counts as missing."""
    return int((~grid_presence(frame.timestamps, start, end, period)).sum())
