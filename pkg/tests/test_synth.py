from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from taptest.dsp import AudioSignal, welch_psd
from taptest.segment import HEALTHY, UNHEALTHY
from taptest.synth import (HEALTHY_TEMPLATE, UNHEALTHY_TEMPLATE, SessionSpec, TapTemplate, VibrationProfile,
                           impact_modulation, synth_session, synth_tap)

FS = 44100


def centroid(w):
    s = welch_psd(AudioSignal(np.pad(w, (0, max(0, 2048 - len(w)))), FS), 1024)
    return float(np.sum(s.freqs * s.psd) / np.sum(s.psd))


def quiet_spec(**kw):
    base = dict(noise_floor_db=-300.0, swing_db=0.0, hum_db=None, knock_amplitude=0.0, rumble_per_deg=0.0,
                rattle_rate=0.0)
    base.update(kw)
    return SessionSpec(**base)


# -- templates and single taps -----------------------------------------------

def test_template_validation():
    with pytest.raises(ValueError):
        synth_tap(TapTemplate(HEALTHY, (30000.0,), (0.03,), 0.5, 0.2), 1.0, 0)
    with pytest.raises(ValueError):
        TapTemplate(HEALTHY, (1800.0,), (1.5,), 0.5, 0.2)
    with pytest.raises(ValueError):
        TapTemplate(HEALTHY, (1800.0, 3400.0), (0.03,), 0.5, 0.2)


def test_zero_gain_gives_silence():
    assert not np.any(synth_tap(HEALTHY_TEMPLATE, 0.0, 1))
    with pytest.raises(ValueError):
        synth_tap(HEALTHY_TEMPLATE, -1.0, 1)


def test_single_mode_peak_in_spectrum():
    tpl = TapTemplate(HEALTHY, (1800.0,), (0.005,), 0.5, 0.5, 0.0)
    s = welch_psd(AudioSignal(synth_tap(tpl, 1.0, 0), FS), 1024)
    assert abs(s.freqs[np.argmax(s.psd)] - 1800.0) <= s.delta_f


def test_tap_peak_scales_with_gain():
    for seed in range(5):
        w = synth_tap(UNHEALTHY_TEMPLATE, 0.5, seed)
        j = UNHEALTHY_TEMPLATE.jitter
        assert 0.5 * 0.7 * (1 - j) - 1e-12 <= np.abs(w).max() <= 0.5 * 0.7 * (1 + j) + 1e-12


def test_unhealthy_rings_lower():
    assert centroid(synth_tap(UNHEALTHY_TEMPLATE, 1.0, 3)) < centroid(synth_tap(HEALTHY_TEMPLATE, 1.0, 3))


def test_centroids_do_not_overlap():
    h = [centroid(synth_tap(HEALTHY_TEMPLATE, 1.0, s)) for s in range(40)]
    u = [centroid(synth_tap(UNHEALTHY_TEMPLATE, 1.0, s)) for s in range(40, 80)]
    assert max(u) < min(h)


# -- strike modulation --------------------------------------------------------

def test_modulation_examples():
    t = np.linspace(0, 4, 101)
    np.testing.assert_array_equal(impact_modulation(VibrationProfile(), t), 1.0)
    crest = 0.5  # quarter period of 0.5 Hz
    assert impact_modulation(VibrationProfile.level(5.0), crest) == pytest.approx(0.40, abs=1e-12)
    period = np.linspace(0, 2, 2001)
    assert impact_modulation(VibrationProfile.level(1.0), period).mean() > \
        impact_modulation(VibrationProfile.level(5.0), period).mean()


def test_modulation_clamps_and_validates():
    assert impact_modulation(VibrationProfile.level(50.0), 0.5) == 0.2
    with pytest.raises(ValueError):
        impact_modulation(VibrationProfile(), 0.0, coupling=-1)
    with pytest.raises(ValueError):
        VibrationProfile(frequency_hz=0.0)


@given(st.floats(0, 20), st.floats(0.01, 20), st.floats(0.01, 0.3))
def test_mean_gain_decreases_with_tilt(a, da, coupling):
    period = np.linspace(0, 2, 401)
    lo = impact_modulation(VibrationProfile.level(a), period, coupling).mean()
    hi = impact_modulation(VibrationProfile.level(a + da), period, coupling).mean()
    assert hi <= lo
    if coupling * a < 0.5:  # away from the floor the decrease is strict
        assert hi < lo


# -- sessions -----------------------------------------------------------------

def test_default_session_event_count():
    s = synth_session(SessionSpec(seed=1))
    assert len(s.truth_index) == 193
    assert list(s.truth_class).count(HEALTHY) == 96 and list(s.truth_class).count(UNHEALTHY) == 97
    assert len(s.signal.samples) == 90 * FS
    assert np.all(np.diff(s.truth_index) > 0)


def test_session_is_deterministic():
    spec = SessionSpec(seed=7, vibration=VibrationProfile.level(3.0, duration_s=20.0), taps_per_class=(20, 20))
    a, b = synth_session(spec), synth_session(spec)
    np.testing.assert_array_equal(a.signal.samples, b.signal.samples)
    np.testing.assert_array_equal(a.artifact_index, b.artifact_index)
    c = synth_session(replace(spec, seed=8))
    assert not np.array_equal(a.signal.samples, c.signal.samples)


def test_quiet_session_peaks_track_templates():
    s = synth_session(quiet_spec(seed=3, taps_per_class=(10, 10), vibration=VibrationProfile(duration_s=12.0)))
    assert np.all(s.strike_gain == 1.0)
    x = np.abs(s.signal.samples)
    for i, c in zip(s.truth_index, s.truth_class):
        tpl = HEALTHY_TEMPLATE if c == HEALTHY else UNHEALTHY_TEMPLATE
        assert tpl.base_amplitude * (1 - tpl.jitter) - 1e-9 <= x[i] <= tpl.base_amplitude * (1 + tpl.jitter) + 1e-9


def test_strike_spread_grows_with_tilt():
    def cv(deg):
        s = synth_session(SessionSpec(seed=2, vibration=VibrationProfile.level(deg)))
        return s.strike_gain.std() / s.strike_gain.mean()
    assert cv(5.0) > cv(1.0)


def test_truth_indices_are_local_maxima():
    s = synth_session(SessionSpec(seed=4, vibration=VibrationProfile.level(5.0)))
    x = np.abs(s.signal.samples)
    half = 4096 // 20
    for i in s.truth_index:
        assert x[i] == x[max(0, i - half):i + half + 1].max()


def test_rattles_only_above_onset():
    assert len(synth_session(SessionSpec(seed=0, vibration=VibrationProfile.level(1.0))).artifact_index) == 0
    assert len(synth_session(SessionSpec(seed=0, vibration=VibrationProfile.level(5.0))).artifact_index) > 0


def test_session_rejects_overfull_schedule():
    with pytest.raises(ValueError):
        synth_session(SessionSpec(taps_per_class=(200, 200)))
