import numpy as np
import pytest

from powerstate.errors import InvalidRange, UnfillableGap
from powerstate.frame import MS_PER_DAY, TimestampedFrame
from powerstate.impute import (Fallback, ImputationPolicy, impute_same_timestamp,
                               missing_grid_count)
from powerstate.ingest import detect_gaps

HOUR = 3_600_000
DAY = MS_PER_DAY


def hourly(days, values_fn, drop=(), channels=1):
    ts = np.arange(days * 24, dtype=np.int64) * HOUR
    vals = np.array([[values_fn(t, c) for c in range(channels)] for t in ts])
    keep = ~np.isin(ts, np.asarray(drop, dtype=np.int64))
    return TimestampedFrame(tuple(f"c{i}" for i in range(channels)), ts[keep], vals[keep], HOUR), ts, vals


def grid(days):
    return (0, (days * 24 - 1) * HOUR, HOUR)


def test_two_donor_mean():
    # 09:00 on day 1 missing; day 0 has 4.0 and day 2 has 6.0 at 09:00
    t = DAY + 9 * HOUR
    f, _, _ = hourly(3, lambda ts, c: 4.0 + (ts // DAY) if ts % DAY == 9 * HOUR else 0.0,
                     drop=[t])
    r = impute_same_timestamp(f, grid(3))
    assert r.frame.values[33, 0] == 5.0
    assert r.imputed.sum() == 1 and r.fallback_cells.sum() == 0


def test_complete_frame_unchanged():
    f, _, _ = hourly(2, lambda t, c: float(t % 97))
    r = impute_same_timestamp(f, grid(2))
    assert r.frame.equals(f)
    assert not r.imputed.any()


def test_idempotent():
    f, _, _ = hourly(4, lambda t, c: np.sin(t / 1e7) + c, drop=[30 * HOUR, 31 * HOUR], channels=3)
    once = impute_same_timestamp(f, grid(4)).frame
    twice = impute_same_timestamp(once, grid(4)).frame
    assert twice.equals(once)


def test_present_cells_never_change():
    rng = np.random.default_rng(1)
    f, ts, vals = hourly(5, lambda t, c: float(rng.standard_normal()), channels=2,
                         drop=list(np.arange(0, 120, 7) * HOUR))
    r = impute_same_timestamp(f, grid(5))
    present = ~r.imputed.any(axis=1)
    assert np.array_equal(r.frame.values[present], vals[present])


def test_one_sided_donor_used_alone():
    # first day missing at 05:00; only the next day can donate
    f, _, vals = hourly(3, lambda t, c: float(t // DAY) * 10 + 1, drop=[5 * HOUR])
    r = impute_same_timestamp(f, grid(3))
    assert r.frame.values[5, 0] == vals[24 + 5, 0]


def test_scan_continues_past_missing_days():
    # 05:00 missing on days 1 and 2: day 2 takes day 0 (back) and day 3 (ahead)
    f, _, vals = hourly(4, lambda t, c: float(t // DAY), drop=[DAY + 5 * HOUR, 2 * DAY + 5 * HOUR])
    r = impute_same_timestamp(f, grid(4))
    assert r.frame.values[2 * 24 + 5, 0] == (0.0 + 3.0) / 2
    assert r.frame.values[24 + 5, 0] == (0.0 + 3.0) / 2


def test_horizon_respected():
    # donors 3 days away are beyond a 2-day horizon, so the fallback applies
    drop = [d * DAY + 5 * HOUR for d in (1, 2, 3, 4, 5)]
    f, _, _ = hourly(7, lambda t, c: 100.0 if t % DAY == 5 * HOUR else float(t // HOUR % 24),
                     drop=drop)
    pol = ImputationPolicy(2, 2, Fallback.LINEAR)
    r = impute_same_timestamp(f, grid(7), pol)
    day3 = 3 * 24 + 5
    assert r.fallback_cells[day3, 0]
    assert r.frame.values[day3, 0] == pytest.approx(5.0)  # between 04:00 and 06:00
    r2 = impute_same_timestamp(f, grid(7), ImputationPolicy(3, 3))
    assert r2.frame.values[day3, 0] == 100.0


def test_leave_missing_raises_with_partial():
    f, _, _ = hourly(1, lambda t, c: 1.0, drop=[3 * HOUR])
    with pytest.raises(UnfillableGap) as e:
        impute_same_timestamp(f, grid(1), ImputationPolicy(fallback="leave-missing"))
    assert e.value.timestamps == [3 * HOUR]
    assert np.isnan(e.value.partial.values[3, 0])


def test_carry_nearest():
    f, _, _ = hourly(1, lambda t, c: float(t // HOUR), drop=[3 * HOUR, 4 * HOUR, 5 * HOUR])
    r = impute_same_timestamp(f, grid(1), ImputationPolicy(fallback="carry-nearest"))
    assert r.frame.values[3:6, 0].tolist() == [2.0, 2.0, 6.0]


def test_no_missing_after_fallback_and_mask_matches_gaps():
    rng = np.random.default_rng(7)
    drop = sorted(rng.choice(24 * 6, 40, replace=False) * HOUR)
    f, _, _ = hourly(6, lambda t, c: float(t % 11), drop=drop, channels=2)
    r = impute_same_timestamp(f, grid(6))
    assert not np.isnan(r.frame.values).any()
    assert len(r.frame) == 24 * 6
    assert r.imputed_rows == detect_gaps(f, HOUR, grid(6)[:2]).missing_count
    assert r.imputed_rows == missing_grid_count(f, 0, grid(6)[1], HOUR)


def test_day_type_matching():
    # 2022-01-08 (Saturday) 05:00 missing; the weekday neighbour is skipped
    sat = int(np.datetime64("2022-01-08", "ms").astype(np.int64))
    t0 = sat - 2 * DAY
    ts = t0 + np.arange(5 * 24, dtype=np.int64) * HOUR
    day = (ts - t0) // DAY
    vals = np.where(day == 3, 7.0, day.astype(float))[:, None]  # day 3 is Sunday
    miss = sat + 5 * HOUR
    keep = ts != miss
    f = TimestampedFrame(("a",), ts[keep], vals[keep], HOUR)
    g = (int(ts[0]), int(ts[-1]), HOUR)
    plain = impute_same_timestamp(f, g).frame.values[48 + 5, 0]
    matched = impute_same_timestamp(f, g, ImputationPolicy(match_day_type=True)).frame.values[48 + 5, 0]
    assert plain == (1.0 + 7.0) / 2
    assert matched == 7.0


def test_two_donors_per_side():
    f, _, _ = hourly(5, lambda t, c: float(t // DAY), drop=[2 * DAY])
    r = impute_same_timestamp(f, grid(5), ImputationPolicy(donors_per_side=2))
    assert r.frame.values[48, 0] == (0 + 1 + 3 + 4) / 4


def test_bad_grid():
    f, _, _ = hourly(1, lambda t, c: 1.0)
    with pytest.raises(InvalidRange):
        impute_same_timestamp(f, (10, 0, HOUR))
    with pytest.raises(InvalidRange):
        impute_same_timestamp(f, (0, DAY, 7_000_000))
    with pytest.raises(ValueError):
        ImputationPolicy(max_lookback_days=0)


def test_all_missing_channel_unfillable():
    ts = np.arange(24, dtype=np.int64) * HOUR
    vals = np.column_stack([np.ones(24), np.full(24, np.nan)])
    f = TimestampedFrame(("a", "b"), ts, vals, HOUR)
    with pytest.raises(UnfillableGap):
        impute_same_timestamp(f, grid(1))
