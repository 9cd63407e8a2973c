import json

import numpy as np
import pytest

from conftest import frame
from powerstate.cluster import assign_nearest, fit_state_model, sweep_k
from powerstate.errors import InvalidProfile
from powerstate.features import resample_mean, select_odd_current_harmonics
from powerstate.frame import MS_PER_MINUTE
from powerstate.ingest import ECD_CHANNELS, detect_gaps
from powerstate.synth import (LOCATION_PRESETS, SyntheticProfile, best_permutation_agreement,
                              generate_days, inject_gaps, make_profile, preset_profile,
                              separation_noise_ratio)

FAST = dict(harmonics_period_ms=30_000, ecd_period_ms=30_000)


def features(data):
    return resample_mean(select_odd_current_harmonics(data.harmonics))


def test_one_state_zero_noise_rows_identical():
    p = make_profile(1, noise=0.0, **FAST)
    m = features(generate_days(p, 1, include_ecd=False))
    assert (m.values == m.values[0]).all()


def test_four_states_sweep_finds_four():
    p = make_profile(4, separation_ratio=10, seed=3, **FAST)
    m = features(generate_days(p, 1, include_ecd=False))
    assert sweep_k(m, (1, 10), restarts=4).chosen_k == 4


def test_india4_gap_rate():
    p = preset_profile("india-4", seed=0, harmonics_period_ms=5000, ecd_period_ms=5000)
    d = generate_days(p, 2)
    r = detect_gaps(d.harmonics, 5000, d.range)
    assert abs(r.missing_fraction - 0.1029) <= 0.005
    assert p.gap_fraction == LOCATION_PRESETS["india-4"]["gap_fraction"]


def test_zero_noise_assignment_exact():
    p = make_profile(5, noise=0.0, seed=2, **FAST)
    d = generate_days(p, 1, include_ecd=False)
    m = features(d)
    sm = fit_state_model(m, 5)
    assert best_permutation_agreement(assign_nearest(sm, m), d.truth) == 1.0


def test_deterministic_per_seed():
    p = make_profile(3, seed=11, gap_fraction=0.05, **FAST)
    a = generate_days(p, 2)
    b = generate_days(p, 2)
    assert a.harmonics.equals(b.harmonics) and a.ecd.equals(b.ecd)
    c = generate_days(make_profile(3, seed=12, gap_fraction=0.05, **FAST), 2)
    assert not a.harmonics.equals(c.harmonics)


def test_schedule_and_truth():
    p = make_profile(4, seed=1, **FAST)
    ms = p.minute_states()
    assert len(ms) == 1440 and set(ms.tolist()) == {0, 1, 2, 3}
    d = generate_days(p, 2, include_ecd=False)
    assert len(d.truth) == 2880
    assert np.array_equal(d.truth.labels[:1440], ms)
    assert np.all(np.diff(d.truth.timestamps) == MS_PER_MINUTE)


def test_ecd_physics():
    p = make_profile(3, seed=4, current_range=(15, 60), **FAST)
    e = generate_days(p, 1).ecd
    assert e.channel_names == ECD_CHANNELS
    assert (e.column("ApparentPT") >= 0).all()
    ia = e.column("IA")
    assert ia.min() >= 15 and ia.max() <= 60


def test_default_cadences():
    p = make_profile(2, seed=0)
    assert p.harmonics_period_ms == 500 and p.ecd_period_ms == 300


def test_separation_ratio():
    assert separation_noise_ratio(make_profile(4, separation_ratio=8, noise=0.5)) == pytest.approx(8)


class TestInjectGaps:
    def test_zero_is_identity(self):
        f = frame(np.arange(100.0))
        assert inject_gaps(f, 0.0) is f

    def test_one_is_empty(self):
        assert len(inject_gaps(frame(np.arange(100.0)), 1.0)) == 0

    def test_fraction_on_1e5_rows(self):
        f = frame(np.zeros(100_000), period=500)
        g = inject_gaps(f, 0.05, seed=3)
        assert 0.045 <= 1 - len(g) / len(f) <= 0.055

    def test_spans_are_contiguous(self):
        f = frame(np.zeros(20_000), period=500)
        g = inject_gaps(f, 0.1, mean_span_ms=60_000, seed=1)
        r = detect_gaps(g, 500, (0, 19_999 * 500))
        # bursty deletion: far fewer spans than deleted rows
        assert len(r.gap_spans) < r.missing_count / 20


class TestProfileValidation:
    def test_bad_schedule(self):
        p = make_profile(2)
        with pytest.raises(InvalidProfile):
            SyntheticProfile(2, p.state_centroids, 0.1, [(10, 0)])
        with pytest.raises(InvalidProfile):
            SyntheticProfile(2, p.state_centroids, 0.1, [(0, 0), (0, 1)])
        with pytest.raises(InvalidProfile):
            SyntheticProfile(2, p.state_centroids, 0.1, [(0, 5)])

    def test_bad_shape_and_fraction(self):
        with pytest.raises(InvalidProfile):
            SyntheticProfile(2, np.zeros((2, 10)), 0.1, [(0, 0)])
        with pytest.raises(InvalidProfile):
            make_profile(2, gap_fraction=1.5)

    def test_n_days(self):
        with pytest.raises(InvalidProfile):
            generate_days(make_profile(2), 0)

    def test_unknown_preset(self):
        with pytest.raises(InvalidProfile):
            preset_profile("mars-1")

    def test_json_round_trip(self):
        p = make_profile(3, seed=5, **FAST)
        q = SyntheticProfile.from_json(json.dumps(p.to_dict()))
        assert q.to_dict() == p.to_dict()
        r = SyntheticProfile.from_dict({"n_states": 3, "seed": 5, **FAST})
        assert np.array_equal(r.state_centroids, p.state_centroids)


def test_agreement_helper():
    assert best_permutation_agreement([1, 1, 0, 0], [0, 0, 1, 1]) == 1.0
    assert best_permutation_agreement([0, 0, 0, 0], [0, 0, 1, 1]) == 0.5
