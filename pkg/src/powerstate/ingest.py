"""MiDAS CSV ingestion, CSV writing and gap detection.

Files are read in bounded chunks. A first streaming pass counts data lines so
the output arrays can be allocated once; the second pass fills them. Peak
memory is therefore the output frame plus one chunk.
"""
from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import EmptyFile, InvalidRange, MissingColumn, TimestampParse
from .frame import TimestampedFrame
from .util import temp_beside

log = logging.getLogger(__name__)

ECD_CHANNELS = (
    "IA", "IB", "IC", "INCURRENT",
    "VA", "VB", "VC",
    "PFA", "PFB", "PFC", "PFT",
    "PhaseA", "PhaseB", "PhaseC",
    "ActivePA", "ActivePB", "ActivePC", "ActivePT",
    "ReactivePA", "ReactivePB", "ReactivePC", "ReactivePT",
    "ApparentPA", "ApparentPB", "ApparentPC", "ApparentPT",
    "FREQ",
)

HARMONIC_ORDERS = tuple(range(2, 33))


def _harmonic_block(prefix):
    return tuple(f"{prefix}_HR{o}" for o in HARMONIC_ORDERS) + (f"{prefix}_THD",)


HARMONICS_CHANNELS = sum(
    (_harmonic_block(p) for p in ("AI", "BI", "CI", "AV", "BV", "CV")), ()
)

TIMESTAMP_NAMES = ("Time Stamp", "timestamp", "datetime")
ECD_PERIOD_MS = 300
HARMONICS_PERIOD_MS = 500

DEFAULT_TIMESTAMP_FORMAT = "DD-MM-YYYY HH:MM:SS"
EPOCH_MS = "epoch_ms"

_CHUNK_ROWS = 50_000


def strftime_pattern(fmt):
    """Translate a format descriptor into a strftime pattern.

    Accepts strftime patterns as-is, ``epoch_ms``/``epoch_s``, or the token
    form ``DD-MM-YYYY HH:MM:SS`` (``MM`` after ``HH:`` is minutes, elsewhere
    month; ``.fff`` is milliseconds).
    """
    if fmt in (EPOCH_MS, "epoch_s") or "%" in fmt:
        return fmt
    out = fmt.replace("YYYY", "%Y").replace("HH", "%H")
    out = out.replace("%H:MM", "%H:%M").replace("MM:SS", "%M:%S")
    out = out.replace("MM", "%m").replace("DD", "%d").replace("SS", "%S")
    out = out.replace(".fff", ".%f")
    return out


def parse_timestamps(texts, fmt, first_row=1):
    """Parse an array of timestamp strings to epoch milliseconds (int64).

    When the pattern has no fractional-second field, values carrying a
    ``.fff`` suffix are still accepted. Raises TimestampParse naming the
    1-based data row of the first unreadable cell.
    """
    texts = pd.Series(np.asarray(texts, dtype=object))
    pattern = strftime_pattern(fmt)
    if pattern in (EPOCH_MS, "epoch_s"):
        nums = pd.to_numeric(texts, errors="coerce")
        bad = nums.isna().to_numpy()
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise TimestampParse(first_row + i, texts.iloc[i])
        scale = 1 if pattern == EPOCH_MS else 1000
        return np.round(nums.to_numpy(dtype=np.float64) * scale).astype(np.int64)
    stripped = texts.astype(str).str.strip()
    parsed = pd.to_datetime(stripped, format=pattern, errors="coerce")
    bad = parsed.isna().to_numpy()
    if bad.any() and "%f" not in pattern:
        retry = pd.to_datetime(stripped[bad], format=pattern + ".%f", errors="coerce")
        parsed = parsed.copy()
        parsed[bad] = retry
        bad = parsed.isna().to_numpy()
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise TimestampParse(first_row + i, texts.iloc[i])
    return parsed.to_numpy().astype("datetime64[ms]").astype(np.int64)


def format_timestamps(ts_ms, fmt):
    """Inverse of :func:`parse_timestamps`; appends ``.mmm`` when needed."""
    ts_ms = np.asarray(ts_ms, dtype=np.int64)
    pattern = strftime_pattern(fmt)
    if pattern == EPOCH_MS:
        return ts_ms.astype(str)
    if pattern == "epoch_s":
        return np.array([repr(t / 1000) for t in ts_ms.tolist()], dtype=object)
    dt = pd.Series(ts_ms.astype("datetime64[ms]"))
    if "%f" in pattern:
        # %f would print microseconds; emit milliseconds instead
        base = dt.dt.strftime(pattern.replace(".%f", "").replace("%f", ""))
        return (base + "." + pd.Series(ts_ms % 1000).map("{:03d}".format)).to_numpy()
    out = dt.dt.strftime(pattern)
    ms = ts_ms % 1000
    if np.any(ms):
        out = out + pd.Series(np.where(ms != 0, [f".{m:03d}" for m in ms.tolist()], ""))
    return out.to_numpy()


def _read_header(path):
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFile(f"{path}: no header row") from None
    header = [h.strip() for h in header]
    if not any(header):
        raise EmptyFile(f"{path}: empty header row")
    return header


def _count_data_lines(path):
    n = 0
    last = b"\n"
    with open(path, "rb") as fh:
        while True:
            block = fh.read(1 << 22)
            if not block:
                break
            n += block.count(b"\n")
            last = block[-1:]
    if last != b"\n":
        n += 1
    return max(n - 1, 0)


def _timestamp_column(header):
    for name in TIMESTAMP_NAMES:
        if name in header:
            return name
    raise MissingColumn(TIMESTAMP_NAMES[0])


def _warn_if_ambiguous(path, texts, fmt):
    """Warn when day and month could be swapped without a parse error."""
    pattern = strftime_pattern(fmt)
    if "%d" not in pattern or "%m" not in pattern:
        return
    swapped = pattern.replace("%d", "\0").replace("%m", "%d").replace("\0", "%m")
    try:
        parse_timestamps(texts, swapped)
    except TimestampParse:
        return
    log.warning("%s: timestamps read as %r would also parse with day and month swapped; "
                "pass --timestamp-format if that is wrong", path, fmt)


def observed_period(timestamps):
    """Median spacing of consecutive timestamps in ms, or None with fewer than 2."""
    if len(timestamps) < 2:
        return None
    return int(np.median(np.diff(np.asarray(timestamps, dtype=np.int64))))


def parse_csv(path, channels, nominal_period, timestamp_format=DEFAULT_TIMESTAMP_FORMAT,
              select=None, chunk_rows=_CHUNK_ROWS):
    """Streaming parse of a MiDAS-style CSV into a TimestampedFrame.

    Args:
        path: CSV file with a header row.
        channels: Required channel names in canonical order.
        nominal_period: Sampling period in ms recorded on the frame.
        timestamp_format: Format descriptor for the timestamp column.
        select: Optional subset of ``channels`` to keep. The header is still
            validated against the full schema.
        chunk_rows: Rows per streaming chunk.

    Rows are sorted by time; for duplicate timestamps the last occurrence in
    the file wins and the number dropped is kept on
    ``frame.duplicates_dropped``. Unparseable numeric cells become NaN.
    """
    path = os.fspath(path)
    if not os.path.exists(path) or os.path.getsize(path) == 0:
        raise EmptyFile(f"{path}: file is empty or missing")
    header = _read_header(path)
    ts_col = _timestamp_column(header)
    for name in channels:
        if name not in header:
            raise MissingColumn(name)
    keep = tuple(channels) if select is None else tuple(select)
    for name in keep:
        if name not in channels:
            raise MissingColumn(name)

    capacity = _count_data_lines(path)
    ts = np.empty(capacity, dtype=np.int64)
    vals = np.empty((capacity, len(keep)), dtype=np.float64)
    n = 0
    reader = pd.read_csv(
        path, usecols=[ts_col, *keep], dtype={ts_col: str}, chunksize=chunk_rows,
        float_precision="round_trip", skipinitialspace=True, encoding="utf-8-sig",
        skip_blank_lines=True, comment="#",
    )
    for chunk in reader:
        chunk.columns = [c.strip() for c in chunk.columns]
        m = len(chunk)
        if n + m > capacity:  # pragma: no cover - line count is an upper bound
            grow = n + m - capacity
            ts = np.concatenate([ts, np.empty(grow, np.int64)])
            vals = np.concatenate([vals, np.empty((grow, len(keep)))])
            capacity = n + m
        if n == 0:
            _warn_if_ambiguous(path, chunk[ts_col].to_numpy(), timestamp_format)
        ts[n:n + m] = parse_timestamps(chunk[ts_col].to_numpy(), timestamp_format, n + 1)
        for j, name in enumerate(keep):
            col = chunk[name]
            if not pd.api.types.is_numeric_dtype(col.dtype):
                col = pd.to_numeric(col, errors="coerce")
            vals[n:n + m, j] = col.to_numpy(dtype=np.float64, na_value=np.nan)
        n += m
    ts = ts[:n]
    vals = vals[:n]

    dropped = 0
    if n > 1 and not np.all(np.diff(ts) > 0):
        # stable sort keeps file order among equal timestamps; keep the last
        order = np.argsort(ts, kind="stable")
        ts = ts[order]
        vals = vals[order]
        last = np.ones(n, dtype=bool)
        last[:-1] = ts[1:] != ts[:-1]
        dropped = int(n - last.sum())
        if dropped:
            log.info("%s: dropped %d duplicate timestamps", path, dropped)
            ts = ts[last]
            vals = vals[last]
    ts.flags.writeable = False
    vals.flags.writeable = False
    return TimestampedFrame(keep, ts, vals, nominal_period, dropped, {"source": path})


def parse_ecd_csv(path, timestamp_format=DEFAULT_TIMESTAMP_FORMAT, select=None, **kw):
    return parse_csv(path, ECD_CHANNELS, ECD_PERIOD_MS, timestamp_format, select, **kw)


def parse_harmonics_csv(path, timestamp_format=DEFAULT_TIMESTAMP_FORMAT, select=None, **kw):
    return parse_csv(path, HARMONICS_CHANNELS, HARMONICS_PERIOD_MS, timestamp_format, select, **kw)


def write_frame_csv(frame, path, timestamp_format=DEFAULT_TIMESTAMP_FORMAT,
                    timestamp_name="Time Stamp", chunk_rows=_CHUNK_ROWS, header_lines=()):
    """Write a frame in the ingest CSV format. MISSING becomes an empty cell.

    Floats are written in shortest round-trip form, so parsing the output
    reproduces the frame exactly. The file is written to a temporary name and
    renamed into place.
    """
    path = os.fspath(path)
    fd, tmp = temp_beside(path, ".csv")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            fh.write(",".join([timestamp_name, *frame.channel_names]) + "\n")
            for lo in range(0, len(frame), chunk_rows):
                hi = min(lo + chunk_rows, len(frame))
                df = pd.DataFrame(frame.values[lo:hi], columns=list(frame.channel_names))
                df.insert(0, timestamp_name, format_timestamps(frame.timestamps[lo:hi], timestamp_format))
                df.to_csv(fh, header=False, index=False, na_rep="", lineterminator="\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class GapReport:
    expected_count: int
    present_count: int
    missing_fraction: float
    gap_spans: list = field(default_factory=list)
    duplicates_dropped: int = 0

    @property
    def missing_count(self):
        return self.expected_count - self.present_count


def grid_presence(timestamps, start, end, period):
    """Boolean mask over grid points start + i*period (i.e. <= end).

    A grid point g is present when some timestamp t satisfies
    g - period/2 <= t < g + period/2; the half-open window keeps adjacent
    grid points from sharing a row.
    """
    n = (end - start) // period + 1
    grid2 = 2 * (start + period * np.arange(n, dtype=np.int64))
    ts2 = 2 * np.asarray(timestamps, dtype=np.int64)
    idx = np.searchsorted(ts2, grid2 - period, side="left")
    ok = idx < len(ts2)
    present = np.zeros(n, dtype=bool)
    present[ok] = ts2[idx[ok]] < grid2[ok] + period
    return present


def _runs(mask):
    """(first, last) index pairs of True runs."""
    if not mask.any():
        return []
    d = np.diff(np.concatenate([[0], mask.astype(np.int8), [0]]))
    starts = np.flatnonzero(d == 1)
    stops = np.flatnonzero(d == -1) - 1
    return list(zip(starts.tolist(), stops.tolist()))


def detect_gaps(frame, nominal_period=None, range_=None):
    """Compare a frame against its regular grid over ``range_``.

    ``range_`` defaults to the frame's first and last timestamp.
    """
    period = int(frame.nominal_period if nominal_period is None else nominal_period)
    if period <= 0:
        raise InvalidRange("nominal_period must be positive")
    if range_ is None:
        if len(frame) == 0:
            raise InvalidRange("empty frame needs an explicit range")
        range_ = (int(frame.timestamps[0]), int(frame.timestamps[-1]))
    start, end = (int(x) for x in range_)
    if start > end:
        raise InvalidRange(f"start {start} after end {end}")
    present = grid_presence(frame.timestamps, start, end, period)
    expected = len(present)
    n_present = int(present.sum())
    spans = [(start + a * period, start + b * period) for a, b in _runs(~present)]
    return GapReport(expected, n_present, 1.0 - n_present / expected, spans,
                     frame.duplicates_dropped)


def concat_frames(frames):
    """Merge frames with identical channels; later frames win on duplicate timestamps."""
    frames = list(frames)
    if not frames:
        raise EmptyFile("no frames to merge")
    if len(frames) == 1:
        return frames[0]
    names = frames[0].channel_names
    for f in frames[1:]:
        if f.channel_names != names:
            raise MissingColumn(next(iter(set(names) ^ set(f.channel_names)), "?"))
    ts = np.concatenate([f.timestamps for f in frames])
    vals = np.concatenate([f.values for f in frames])
    order = np.argsort(ts, kind="stable")
    ts, vals = ts[order], vals[order]
    last = np.ones(len(ts), dtype=bool)
    last[:-1] = ts[1:] != ts[:-1]
    dropped = int((~last).sum()) + sum(f.duplicates_dropped for f in frames)
    return TimestampedFrame(names, ts[last], vals[last], frames[0].nominal_period, dropped)
