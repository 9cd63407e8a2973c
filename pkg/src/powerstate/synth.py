"""Synthetic MiDAS-schema data with known states.

Harmonic centroids here are invented and non-physical; only the schemas,
cadences, current ranges and missing-data rates follow the real locations.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .cluster import StateAssignment
from .errors import InvalidProfile
from .features import ODD_ORDERS, PHASES
from .frame import MS_PER_DAY, MS_PER_MINUTE, TimestampedFrame
from .ingest import (ECD_CHANNELS, ECD_PERIOD_MS, HARMONIC_ORDERS, HARMONICS_CHANNELS,
                     HARMONICS_PERIOD_MS)

MINUTES_PER_DAY = 1440
N_ODD = len(ODD_ORDERS)

# Published amp range and share of missing data per location.
# USA amp ranges are not published; those two are placeholders.
LOCATION_PRESETS = {
    "india-1": {"current_range": (2.0, 25.0), "gap_fraction": 0.0534, "n_states": 4},
    "india-2": {"current_range": (35.0, 110.0), "gap_fraction": 0.0151, "n_states": 5},
    "india-3": {"current_range": (2.0, 40.0), "gap_fraction": 0.0058, "n_states": 4},
    "india-4": {"current_range": (15.0, 60.0), "gap_fraction": 0.1029, "n_states": 6},
    "india-5": {"current_range": (3.0, 25.0), "gap_fraction": 0.0013, "n_states": 3},
    "india-6": {"current_range": (0.5, 10.0), "gap_fraction": 0.0041, "n_states": 3},
    "usa-1": {"current_range": (5.0, 40.0), "gap_fraction": 0.0167, "n_states": 4, "mains": 120.0},
    "usa-2": {"current_range": (20.0, 80.0), "gap_fraction": 0.0163, "n_states": 3, "mains": 120.0},
}


@dataclass
class SyntheticProfile:
    """Generator settings.

    ``state_centroids`` is n_states x 45: odd current harmonics 3..31 for
    phases A, B, C in that order. ``daily_schedule`` is a list of
    (start_minute, state) pairs, sorted, starting at minute 0; each state
    holds until the next start (the last until midnight).
    """

    n_states: int
    state_centroids: np.ndarray
    state_noise: np.ndarray  # per-feature stddev of a raw 500ms sample
    daily_schedule: list
    current_range: tuple = (15.0, 60.0)
    gap_fraction: float = 0.0
    seed: int = 0
    name: str = "synthetic"
    start: str = "2022-01-03"
    harmonics_period_ms: int = HARMONICS_PERIOD_MS
    ecd_period_ms: int = ECD_PERIOD_MS
    repeat_daily_noise: bool = False
    mains: float = 230.0
    mean_gap_ms: int = 2 * MS_PER_MINUTE

    def __post_init__(self):
        self.state_centroids = np.asarray(self.state_centroids, dtype=np.float64)
        self.state_noise = np.broadcast_to(
            np.asarray(self.state_noise, dtype=np.float64), (3 * N_ODD,)).copy()
        self.daily_schedule = [(int(a), int(b)) for a, b in self.daily_schedule]
        self.current_range = tuple(float(x) for x in self.current_range)
        self.validate()

    def validate(self):
        if self.n_states < 1:
            raise InvalidProfile("n_states must be >= 1")
        if self.state_centroids.shape != (self.n_states, 3 * N_ODD):
            raise InvalidProfile(f"state_centroids must be {self.n_states} x {3 * N_ODD}")
        if np.any(self.state_noise < 0):
            raise InvalidProfile("noise must be non-negative")
        sched = self.daily_schedule
        if not sched or sched[0][0] != 0:
            raise InvalidProfile("schedule must start at minute 0")
        starts = [s for s, _ in sched]
        if any(b <= a for a, b in zip(starts, starts[1:])) or starts[-1] >= MINUTES_PER_DAY:
            raise InvalidProfile("schedule starts must increase within the day")
        if any(not 0 <= st < self.n_states for _, st in sched):
            raise InvalidProfile("schedule names an unknown state")
        if not 0.0 <= self.gap_fraction <= 1.0:
            raise InvalidProfile("gap_fraction must be in [0, 1]")
        lo, hi = self.current_range
        if not 0 <= lo <= hi:
            raise InvalidProfile("bad current_range")
        for p in (self.harmonics_period_ms, self.ecd_period_ms):
            if p <= 0 or MS_PER_MINUTE % p:
                raise InvalidProfile("sampling periods must divide one minute")

    def minute_states(self):
        """State index for each minute of the day."""
        out = np.empty(MINUTES_PER_DAY, dtype=np.int64)
        bounds = [s for s, _ in self.daily_schedule] + [MINUTES_PER_DAY]
        for (s, st), e in zip(self.daily_schedule, bounds[1:]):
            out[s:e] = st
        return out

    def to_dict(self):
        d = asdict(self)
        d["state_centroids"] = self.state_centroids.tolist()
        d["state_noise"] = self.state_noise.tolist()
        d["current_range"] = list(self.current_range)
        d["daily_schedule"] = [list(x) for x in self.daily_schedule]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "state_centroids" not in d:
            return make_profile(**d)
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _spread_centroids(n_states, separation, rng):
    """n_states points in R^15 whose closest pair is exactly ``separation`` apart."""
    if n_states == 1:
        return np.zeros((1, N_ODD))
    pts = rng.standard_normal((n_states, N_ODD))
    d = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    dmin = d[np.triu_indices(n_states, 1)].min()
    return (pts - pts.mean(axis=0)) * (separation / dmin)


def _schedule(n_states, rng, min_len=30):
    """Piecewise-constant day with every state present and uneven shares."""
    n_seg = 2 * n_states
    weights = rng.gamma(1.0, 1.0, n_seg) + 0.2
    free = MINUTES_PER_DAY - min_len * n_seg
    lengths = min_len + np.floor(free * weights / weights.sum()).astype(int)
    lengths[-1] += MINUTES_PER_DAY - lengths.sum()
    states = np.concatenate([rng.permutation(n_states), rng.integers(0, n_states, n_seg - n_states)])
    # merge neighbours with the same state so boundaries are real transitions
    sched, t = [], 0
    for ln, st in zip(lengths, states):
        if not sched or sched[-1][1] != st:
            sched.append((t, int(st)))
        t += int(ln)
    return sched


def make_profile(n_states=4, separation_ratio=10.0, noise=0.5, seed=0, name="synthetic",
                 current_range=(15.0, 60.0), gap_fraction=0.0, **kw):
    """Profile with centroids whose closest pair is ``separation_ratio * noise`` apart.

    The separation is measured in the 15-feature phase-mean space; all three
    phases share each state's offsets, so it holds for per-phase features too.
    With ``noise=0`` the centroids are spaced as if the noise were 1.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5EED]))
    base = 30.0 / np.asarray(ODD_ORDERS, dtype=np.float64) + 2.0
    offsets = _spread_centroids(n_states, separation_ratio * (noise if noise > 0 else 1.0), rng)
    phase_skew = rng.normal(0.0, 0.3, (3, N_ODD))
    cents = np.concatenate(
        [base + 3 * noise + offsets - offsets.min() + phase_skew[p] for p in range(3)], axis=1)
    sched = kw.pop("daily_schedule", None) or _schedule(n_states, rng)
    return SyntheticProfile(n_states, cents, np.full(3 * N_ODD, float(noise)), sched,
                            tuple(current_range), gap_fraction, int(seed), name, **kw)


def preset_profile(name, seed=0, **overrides):
    key = name.lower()
    if key not in LOCATION_PRESETS:
        raise InvalidProfile(f"unknown preset {name!r}; choose from {sorted(LOCATION_PRESETS)}")
    p = dict(LOCATION_PRESETS[key])
    p.update(overrides)
    return make_profile(name=key, seed=seed, **p)


def _day_start_ms(profile):
    return int(np.datetime64(profile.start, "D").astype("datetime64[ms]").astype(np.int64))


def _harmonics_day(profile, rng, minute_state, period):
    """One day of the 192 harmonics channels."""
    n = MS_PER_DAY // period
    per_min = MS_PER_MINUTE // period
    state = np.repeat(minute_state, per_min)
    odd = profile.state_centroids[state] + rng.standard_normal((n, 3 * N_ODD)) * profile.state_noise
    out = np.empty((n, len(HARMONICS_CHANNELS)))
    block = len(HARMONIC_ORDERS) + 1
    odd_pos = [HARMONIC_ORDERS.index(o) for o in ODD_ORDERS]
    even_pos = [i for i, o in enumerate(HARMONIC_ORDERS) if o % 2 == 0]
    for p in range(3):
        cur = np.empty((n, len(HARMONIC_ORDERS)))
        cur[:, odd_pos] = odd[:, p * N_ODD:(p + 1) * N_ODD]
        cur[:, even_pos] = 0.3 + 0.05 * rng.standard_normal((n, len(even_pos)))
        out[:, p * block:p * block + block - 1] = cur
        out[:, p * block + block - 1] = np.sqrt((cur ** 2).sum(axis=1))
    for p in range(3, 6):
        volt = 0.2 + 0.02 * rng.standard_normal((n, len(HARMONIC_ORDERS)))
        volt[:, HARMONIC_ORDERS.index(3)] += 1.5
        volt[:, HARMONIC_ORDERS.index(5)] += 2.0
        out[:, p * block:p * block + block - 1] = volt
        out[:, p * block + block - 1] = np.sqrt((volt ** 2).sum(axis=1))
    return out


def _ecd_day(profile, rng, minute_state, period):
    n = MS_PER_DAY // period
    per_min = MS_PER_MINUTE // period
    state = np.repeat(minute_state, per_min)
    lo, hi = profile.current_range
    level = np.linspace(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo), profile.n_states)
    level = level[np.random.default_rng(profile.seed).permutation(profile.n_states)]
    pf_state = np.linspace(0.82, 0.97, profile.n_states)
    cols = {}
    noise_i = 0.02 * (hi - lo)
    for ph in PHASES:
        i = np.clip(level[state] + noise_i * rng.standard_normal(n), lo, hi)
        v = profile.mains + 1.5 * rng.standard_normal(n)
        pf = np.clip(pf_state[state] + 0.01 * rng.standard_normal(n), 0.0, 1.0)
        s = v * i
        cols[f"I{ph}"], cols[f"V{ph}"], cols[f"PF{ph}"] = i, v, pf
        cols[f"Phase{ph}"] = np.degrees(np.arccos(pf))
        cols[f"ActiveP{ph}"] = s * pf
        cols[f"ReactiveP{ph}"] = s * np.sqrt(1.0 - pf ** 2)
        cols[f"ApparentP{ph}"] = s
    cols["INCURRENT"] = np.abs(0.05 * (hi - lo) * rng.standard_normal(n))
    for q in ("Active", "Reactive", "Apparent"):
        cols[f"{q}PT"] = sum(cols[f"{q}P{ph}"] for ph in PHASES)
    cols["PFT"] = cols["ActivePT"] / cols["ApparentPT"]
    cols["FREQ"] = (60.0 if profile.mains < 200 else 50.0) + 0.02 * rng.standard_normal(n)
    return np.column_stack([cols[c] for c in ECD_CHANNELS])


def inject_gaps(frame, gap_fraction, mean_span_ms=2 * MS_PER_MINUTE, seed=0):
    """Delete whole contiguous spans of rows until ``gap_fraction`` of rows are gone.

    Span lengths are geometric with mean ``mean_span_ms``. The last span is
    truncated so the realised fraction is round(gap_fraction * rows) / rows.
    """
    n = len(frame)
    if gap_fraction <= 0 or n == 0:
        return frame
    if gap_fraction >= 1:
        return TimestampedFrame(frame.channel_names, np.empty(0, np.int64),
                                np.empty((0, frame.n_channels)), frame.nominal_period)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x6A95]))
    mean_rows = max(1.0, mean_span_ms / frame.nominal_period)
    remaining = int(round(gap_fraction * n))
    keep = np.ones(n, dtype=bool)
    while remaining > 0:
        alive = np.flatnonzero(keep)
        length = min(int(rng.geometric(1.0 / mean_rows)), remaining)
        pos = int(rng.integers(len(alive)))
        drop = alive[pos:pos + length]
        keep[drop] = False
        remaining -= len(drop)
    return TimestampedFrame(frame.channel_names, frame.timestamps[keep], frame.values[keep],
                            frame.nominal_period, 0, dict(frame.meta))


@dataclass
class SyntheticData:
    ecd: TimestampedFrame | None
    harmonics: TimestampedFrame
    truth: StateAssignment
    complete_harmonics: TimestampedFrame | None = field(default=None, repr=False)

    @property
    def range(self):
        return (int(self.truth.timestamps[0]),
                int(self.truth.timestamps[-1]) + MS_PER_MINUTE - self.harmonics.nominal_period)


def generate_days(profile, n_days, include_ecd=True, keep_complete=False):
    """Generate ``n_days`` of ECD and harmonics data plus per-minute truth labels.

    Every row's odd-harmonic vector is its scheduled state's centroid plus
    Gaussian noise. Day d draws from a generator seeded with (seed, d), or
    (seed, 0) for every day when ``repeat_daily_noise`` is set.
    """
    if n_days < 1:
        raise InvalidProfile("n_days must be >= 1")
    profile.validate()
    t0 = _day_start_ms(profile)
    minute_state = profile.minute_states()
    hp, ep = profile.harmonics_period_ms, profile.ecd_period_ms
    h_vals, e_vals = [], []
    for d in range(n_days):
        day_seed = 0 if profile.repeat_daily_noise else d
        rng = np.random.default_rng(np.random.SeedSequence([int(profile.seed), day_seed]))
        h_vals.append(_harmonics_day(profile, rng, minute_state, hp))
        if include_ecd:
            rng_e = np.random.default_rng(np.random.SeedSequence([int(profile.seed), day_seed, 1]))
            e_vals.append(_ecd_day(profile, rng_e, minute_state, ep))
    h_ts = t0 + hp * np.arange(n_days * (MS_PER_DAY // hp), dtype=np.int64)
    harm = TimestampedFrame(HARMONICS_CHANNELS, h_ts, np.concatenate(h_vals), hp)
    del h_vals
    ecd = None
    if include_ecd:
        e_ts = t0 + ep * np.arange(n_days * (MS_PER_DAY // ep), dtype=np.int64)
        ecd = TimestampedFrame(ECD_CHANNELS, e_ts, np.concatenate(e_vals), ep)
    minutes = t0 + MS_PER_MINUTE * np.arange(n_days * MINUTES_PER_DAY, dtype=np.int64)
    truth = StateAssignment(minutes, np.tile(minute_state, n_days))
    complete = harm if keep_complete else None
    if profile.gap_fraction > 0:
        harm = inject_gaps(harm, profile.gap_fraction, profile.mean_gap_ms, profile.seed)
        if ecd is not None:
            ecd = inject_gaps(ecd, profile.gap_fraction, profile.mean_gap_ms, profile.seed + 1)
    return SyntheticData(ecd, harm, truth, complete)


def best_permutation_agreement(pred, truth):
    """Fraction of rows matching after the best one-to-one relabelling of ``pred``."""
    from scipy.optimize import linear_sum_assignment

    p = np.asarray(pred.labels if hasattr(pred, "labels") else pred)
    t = np.asarray(truth.labels if hasattr(truth, "labels") else truth)
    pu, pi = np.unique(p, return_inverse=True)
    tu, ti = np.unique(t, return_inverse=True)
    M = np.zeros((len(pu), len(tu)), dtype=np.int64)
    np.add.at(M, (pi, ti), 1)
    r, c = linear_sum_assignment(-M)
    return float(M[r, c].sum() / len(t)) if len(t) else 1.0


def separation_noise_ratio(profile):
    """Closest centroid pair distance (phase-mean space) over per-sample noise."""
    c = profile.state_centroids.reshape(profile.n_states, 3, N_ODD).mean(axis=1)
    if profile.n_states < 2:
        return math.inf
    d = np.sqrt(((c[:, None] - c[None]) ** 2).sum(-1))
    return float(d[np.triu_indices(profile.n_states, 1)].min() / profile.state_noise.max())
