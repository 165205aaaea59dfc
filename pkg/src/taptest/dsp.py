"""Short-time energy, Welch spectra and Parseval energy accounting."""

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

EPS = 1e-30


@dataclass(frozen=True)
class AudioSignal:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(x)):
            raise ValueError("samples contain NaN or Inf")
        object.__setattr__(self, "samples", x)

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class EnergySeries:
    window_starts: np.ndarray
    energies: np.ndarray
    window_len: int
    hop: int


@dataclass(frozen=True)
class Spectrum:
    freqs: np.ndarray
    psd: np.ndarray
    delta_f: float

    @property
    def nyquist(self) -> float:
        return float(self.freqs[-1])


def _require_samples(x):
    if len(x) == 0:
        raise ValueError("empty signal")


def frame_starts(n: int, window_len: int, hop: int) -> np.ndarray:
    """Start indices of every complete window; the trailing partial one is dropped."""
    if window_len < 1 or hop < 1:
        raise ValueError("window_len and hop must be >= 1")
    if window_len > n:
        raise ValueError(f"window_len {window_len} exceeds signal length {n}")
    return np.arange(0, n - window_len + 1, hop)


def frames(x: np.ndarray, window_len: int, hop: int) -> np.ndarray:
    """Read-only (n_windows, window_len) view of x."""
    return np.lib.stride_tricks.sliding_window_view(x, window_len)[::hop]


def short_time_energy(sig: AudioSignal, window_len: int = 2048, hop: int = 512) -> EnergySeries:
    x = sig.samples
    _require_samples(x)
    if hop > window_len:
        raise ValueError("hop must not exceed window_len")
    starts = frame_starts(len(x), window_len, hop)
    fr = frames(x, window_len, hop)
    energies = np.einsum("ij,ij->i", fr, fr)
    return EnergySeries(starts, energies, window_len, hop)


def _check_seg_len(seg_len, n):
    if seg_len < 1 or seg_len & (seg_len - 1):
        raise ValueError(f"seg_len must be a power of two, got {seg_len}")
    if seg_len > n:
        raise ValueError(f"seg_len {seg_len} exceeds signal length {n}")


def _welch(x, fs, seg_len, overlap_fraction, window):
    if not 0 <= overlap_fraction < 1:
        raise ValueError("overlap_fraction must lie in [0, 1)")
    noverlap = int(round(seg_len * overlap_fraction))
    # detrend off: the energy identity must hold for the raw samples
    return sps.welch(x, fs=fs, window=window, nperseg=seg_len, noverlap=noverlap,
                     detrend=False, scaling="density", average="mean", axis=-1)


def welch_psd(sig: AudioSignal, seg_len: int = 1024, overlap_fraction: float = 0.5,
              window: str = "hann") -> Spectrum:
    """One-sided Welch PSD; sum(psd) * delta_f approximates the mean square."""
    x = sig.samples
    _require_samples(x)
    _check_seg_len(seg_len, len(x))
    f, p = _welch(x, sig.sample_rate, seg_len, overlap_fraction, window)
    return Spectrum(f, p, sig.sample_rate / seg_len)


def welch_psd_windows(sig: AudioSignal, window_starts, window_len: int, seg_len: int = 1024,
                      overlap_fraction: float = 0.5, window: str = "hann") -> Spectrum:
    """Average of the Welch PSDs of the selected analysis windows."""
    starts = np.asarray(window_starts, dtype=int)
    if len(starts) == 0:
        raise ValueError("no windows selected")
    _check_seg_len(seg_len, window_len)
    f = None
    acc = 0.0
    # chunked to keep memory flat on long sessions
    for i in range(0, len(starts), 512):
        chunk = starts[i:i + 512]
        block = sig.samples[chunk[:, None] + np.arange(window_len)]
        f, p = _welch(block, sig.sample_rate, seg_len, overlap_fraction, window)
        acc = acc + p.sum(axis=0)
    return Spectrum(f, acc / len(starts), sig.sample_rate / seg_len)


def total_energy_time(sig: AudioSignal) -> float:
    x = sig.samples
    _require_samples(x)
    return float(np.dot(x, x))


def total_energy_freq(sig: AudioSignal) -> float:
    """(1/N) * sum |X[k]|^2 over the full DFT."""
    x = sig.samples
    _require_samples(x)
    X = np.fft.fft(x)
    return float(np.sum(X.real ** 2 + X.imag ** 2) / len(x))


def parseval_error(sig: AudioSignal) -> float:
    et = total_energy_time(sig)
    return abs(et - total_energy_freq(sig)) / max(et, EPS)
