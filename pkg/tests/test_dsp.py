import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import naive_dft_energy
from taptest.dsp import (AudioSignal, parseval_error, short_time_energy, total_energy_freq, total_energy_time,
                         welch_psd, welch_psd_windows)

finite = st.floats(-1.0, 1.0, allow_nan=False, allow_infinity=False)


def sig(x, fs=44100):
    return AudioSignal(np.asarray(x, dtype=float), fs)


# -- AudioSignal -------------------------------------------------------------

def test_signal_rejects_non_finite_and_bad_rate():
    with pytest.raises(ValueError):
        sig([0.0, np.nan])
    with pytest.raises(ValueError):
        sig([0.0, np.inf])
    with pytest.raises(ValueError):
        sig([0.0, 1.0], fs=0)
    with pytest.raises(ValueError):
        AudioSignal(np.zeros((2, 2)), 8000)


# -- short-time energy -------------------------------------------------------

def test_energy_of_zero_signal_is_zero():
    e = short_time_energy(sig(np.zeros(100)), 10, 5)
    assert np.all(e.energies == 0)


def test_energy_of_unit_impulse_by_hand():
    x = np.zeros(8)
    x[0] = 1
    e = short_time_energy(sig(x), window_len=4, hop=2)
    assert e.energies.tolist() == [1.0, 0.0, 0.0]
    assert e.window_starts.tolist() == [0, 2, 4]


def test_energy_of_whole_cycle_sine():
    # 100 Hz at 8 kHz: a 400-sample window holds exactly 5 cycles
    fs, A, W = 8000, 0.7, 400
    t = np.arange(4000) / fs
    e = short_time_energy(sig(A * np.sin(2 * np.pi * 100 * t + 0.3), fs), W, 100)
    np.testing.assert_allclose(e.energies, A * A * W / 2, rtol=1e-6)


def test_trailing_partial_window_dropped():
    e = short_time_energy(sig(np.ones(10)), 4, 3)
    assert e.window_starts.tolist() == [0, 3, 6]


@pytest.mark.parametrize("n,w,h", [(0, 1, 1), (5, 6, 1), (10, 4, 5), (10, 4, 0)])
def test_energy_preconditions(n, w, h):
    with pytest.raises(ValueError):
        short_time_energy(AudioSignal(np.zeros(n), 8000), w, h)


@given(arrays(float, st.integers(8, 300), elements=finite), st.integers(1, 8), st.integers(1, 8))
def test_energy_series_invariants(x, w, h):
    h = min(h, w)
    e = short_time_energy(sig(x), w, h)
    assert len(e.energies) == len(e.window_starts)
    assert np.all(e.energies >= 0)
    assert np.all(np.diff(e.window_starts) == h)
    brute = [float(np.sum(x[s:s + w] ** 2)) for s in e.window_starts]
    np.testing.assert_allclose(e.energies, brute, rtol=1e-12, atol=1e-300)


@given(arrays(float, st.integers(4, 400), elements=finite), st.integers(1, 16))
def test_energy_additivity(x, w):
    w = min(w, len(x))
    e = short_time_energy(sig(x), w, w)
    covered = len(e.energies) * w
    assert np.sum(e.energies) == pytest.approx(total_energy_time(sig(x[:covered])), rel=1e-12, abs=1e-300)


# -- Welch ------------------------------------------------------------------

def test_welch_zero_signal():
    s = welch_psd(sig(np.zeros(4096)))
    assert np.all(s.psd == 0)


def test_welch_exact_bin_sine_rectangular():
    fs, L, A = 1024, 256, 0.8
    t = np.arange(8 * L) / fs
    s = welch_psd(sig(A * np.sin(2 * np.pi * 128 * t), fs), L, 0.0, "boxcar")
    assert int(np.argmax(s.psd)) == 32
    total = np.sum(s.psd) * s.delta_f
    assert total == pytest.approx(A * A / 2, rel=1e-3)
    assert s.psd[32] * s.delta_f / total > 0.999


def test_welch_white_noise_power():
    rng = np.random.default_rng(7)
    sigma = 0.3
    x = rng.normal(0, sigma, 64 * 1024)
    s = welch_psd(sig(x), 1024, 0.0)
    assert np.sum(s.psd) * s.delta_f == pytest.approx(np.var(x), rel=0.10)
    assert np.sum(s.psd) * s.delta_f == pytest.approx(sigma ** 2, rel=0.10)


def test_welch_frequency_axis():
    fs, L = 44100, 1024
    s = welch_psd(sig(np.random.default_rng(0).normal(size=8192), fs), L)
    assert s.freqs[0] == 0 and s.freqs[-1] == fs / 2
    np.testing.assert_allclose(s.freqs, np.arange(L // 2 + 1) * fs / L, rtol=0, atol=1e-9)
    assert s.delta_f == pytest.approx(s.freqs[1] - s.freqs[0], rel=1e-9)


@pytest.mark.parametrize("n,L,ov", [(1000, 1000, 0.5), (512, 1024, 0.5), (4096, 1024, 1.0), (4096, 1024, -0.1)])
def test_welch_preconditions(n, L, ov):
    with pytest.raises(ValueError):
        welch_psd(sig(np.ones(n)), L, ov)


@given(arrays(float, st.integers(256, 2048), elements=finite))
def test_welch_non_negative(x):
    assert np.all(welch_psd(sig(x), 256).psd >= 0)


def test_windowed_welch_matches_single_window():
    rng = np.random.default_rng(3)
    s = sig(rng.normal(size=20000))
    a = welch_psd_windows(s, [4096], 2048, 1024)
    b = welch_psd(sig(s.samples[4096:4096 + 2048]), 1024)
    np.testing.assert_allclose(a.psd, b.psd, rtol=1e-12)


# -- energy accounting -------------------------------------------------------

def test_total_energy_examples():
    assert total_energy_time(sig(np.zeros(100))) == 0
    imp = np.zeros(8)
    imp[3] = 1
    assert total_energy_time(sig(imp)) == 1
    assert total_energy_time(sig([1.0, -1.0, 2.0])) == 6
    assert total_energy_freq(sig(np.zeros(100))) == 0
    assert abs(total_energy_freq(sig(imp)) - 1) < 1e-12


def test_parseval_random_4096():
    x = np.random.default_rng(11).normal(size=4096)
    assert parseval_error(sig(x)) < 1e-9


def test_freq_energy_against_written_out_dft():
    x = np.random.default_rng(5).normal(size=97)
    assert total_energy_freq(sig(x)) == pytest.approx(naive_dft_energy(x), rel=1e-10)


@given(arrays(float, st.integers(1, 2048), elements=finite))
def test_parseval_property(x):
    assert parseval_error(sig(x)) < 1e-9
