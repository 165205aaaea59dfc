"""Energy gate: band selection, band-limited SPL, baseline statistics, amplitude thresholds."""

import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy import signal as sps
from scipy.ndimage import uniform_filter1d

from .dsp import AudioSignal, EnergySeries, Spectrum, frames, frame_starts, short_time_energy, welch_psd_windows

SPL_FLOOR = -120.0


class BandSelectionError(ValueError):
    """No usable band could be derived from the spectrum."""


class BandWarning(UserWarning):
    pass


@dataclass(frozen=True)
class BandSelection:
    f_min: float
    f_max: float
    nyquist_fallback: bool = False

    def __post_init__(self):
        if not (0 <= self.f_min < self.f_max):
            raise ValueError(f"invalid band [{self.f_min}, {self.f_max}]")


@dataclass(frozen=True)
class SplSeries:
    window_starts: np.ndarray
    spl: np.ndarray
    p_ref: float


@dataclass(frozen=True)
class BaselineStats:
    mean_spl: float
    std_spl: float
    low_pct: float = 25.0
    high_pct: float = 75.0


@dataclass(frozen=True)
class AmplitudeThresholds:
    lambda_min: float
    lambda_max: float

    def __post_init__(self):
        if not (0 < self.lambda_min < self.lambda_max):
            raise ValueError(f"invalid thresholds ({self.lambda_min}, {self.lambda_max})")


@dataclass(frozen=True)
class GateReport:
    f_min_hz: float
    f_max_hz: float
    lambda_min: float
    lambda_max: float
    baseline_mean_db: float
    baseline_std_db: float

    @property
    def band(self):
        return BandSelection(self.f_min_hz, self.f_max_hz)

    @property
    def thresholds(self):
        return AmplitudeThresholds(self.lambda_min, self.lambda_max)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "GateReport":
        d = json.loads(text)
        return cls(**{k: float(d[k]) for k in cls.__dataclass_fields__})


def _check_pcts(low_pct, high_pct):
    if not (0 <= low_pct < high_pct <= 100):
        raise ValueError("need 0 <= low_pct < high_pct <= 100")


def partition_by_energy(energy: EnergySeries, low_pct: float = 25.0, high_pct: float = 75.0):
    """Indices of low- and high-energy windows.

    Percentiles use linear interpolation. A window sitting exactly on a
    percentile belongs to that set, so equal energies can land in both.
    """
    _check_pcts(low_pct, high_pct)
    e = np.asarray(energy.energies)
    if len(e) < 2:
        raise ValueError("need at least 2 windows")
    lo, hi = np.percentile(e, [low_pct, high_pct])
    return np.flatnonzero(e <= lo), np.flatnonzero(e >= hi)


def smoothed_db(psd, span: int = 9) -> np.ndarray:
    db = 10 * np.log10(np.maximum(psd, 1e-300))
    # nearest-edge padding: zero padding would fake a drop at the band edges
    return uniform_filter1d(db, size=span, mode="nearest")


def select_band(spectrum_high: Spectrum, drop_db: float = 20.0, slope_eps: float = 0.01,
                span: int = 9, lf_max_hz: float = 500.0) -> BandSelection:
    """Pick [f_min, f_max] from the spectrum of the high-energy windows.

    f_min: first bin above the low-frequency maximum that sits drop_db below it.
    f_max: above the dominant in-band peak, the start of the first run of
    `span` bins whose smoothed slope stays under slope_eps dB/bin. Without
    such a peak or run, f_max is Nyquist and a BandWarning is issued.
    """
    if drop_db <= 0:
        raise ValueError("drop_db must be positive")
    f = spectrum_high.freqs
    s = smoothed_db(spectrum_high.psd, span)
    lf = np.flatnonzero(f <= lf_max_hz)
    if len(lf) == 0:
        raise BandSelectionError("no bins in the low-frequency search range")
    i_max = int(lf[np.argmax(s[lf])])
    below = np.flatnonzero(s[i_max + 1:] <= s[i_max] - drop_db)
    if len(below) == 0:
        raise BandSelectionError(f"spectrum never drops {drop_db} dB below its low-frequency maximum")
    i_min = i_max + 1 + int(below[0])

    i_top = None
    if i_min + 1 < len(s) - 1:
        j = i_min + 1 + int(np.argmax(s[i_min + 1:-1]))
        if s[j] > s[j - 1] and s[j] > s[j + 1]:
            i_top = j
    i_flat = None
    if i_top is not None:
        flat = np.abs(np.gradient(s)) < slope_eps
        run = np.convolve(flat[i_top:].astype(int), np.ones(span, int), mode="valid")
        hits = np.flatnonzero(run == span)
        if len(hits):
            i_flat = i_top + int(hits[0])
    if i_flat is None:
        warnings.warn("no flat spectral region found above the band peak; f_max set to Nyquist", BandWarning)
        return BandSelection(float(f[i_min]), float(f[-1]), True)
    return BandSelection(float(f[i_min]), float(f[i_flat]))


def band_energy(spectrum: Spectrum, band: BandSelection) -> float:
    f = spectrum.freqs
    if band.f_min > f[-1] or band.f_max < f[0]:
        raise ValueError("band lies outside the spectrum support")
    sel = (f >= band.f_min) & (f <= band.f_max)
    return float(np.sum(spectrum.psd[sel]) * spectrum.delta_f)


def band_filter(sig: AudioSignal, band: BandSelection, order: int = 4, min_width_hz: float | None = None):
    """Zero-phase Butterworth restriction of the signal to the band."""
    fs = sig.sample_rate
    nyq = fs / 2
    if min_width_hz is None:
        min_width_hz = fs / 2048
    if band.f_max - band.f_min < min_width_hz:
        raise ValueError(f"band narrower than {min_width_hz:.1f} Hz")
    lo = band.f_min > 0
    hi = band.f_max < nyq * 0.999
    if lo and hi:
        sos = sps.butter(order, [band.f_min, band.f_max], btype="bandpass", fs=fs, output="sos")
    elif lo:
        sos = sps.butter(order, band.f_min, btype="highpass", fs=fs, output="sos")
    elif hi:
        sos = sps.butter(order, band.f_max, btype="lowpass", fs=fs, output="sos")
    else:
        return sig.samples.copy()
    return sps.sosfiltfilt(sos, sig.samples)


def rms_spl(y, window_len: int, hop: int, p_ref: float = 1.0) -> SplSeries:
    if p_ref <= 0:
        raise ValueError("p_ref must be positive")
    starts = frame_starts(len(y), window_len, hop)
    fr = frames(y, window_len, hop)
    rms = np.sqrt(np.einsum("ij,ij->i", fr, fr) / window_len)
    spl = 20 * np.log10(np.maximum(rms / p_ref, 10 ** (SPL_FLOOR / 20)))
    return SplSeries(starts, spl, p_ref)


def band_limited_spl(sig: AudioSignal, band: BandSelection, window_len: int = 2048, hop: int = 512,
                     p_ref: float = 1.0) -> SplSeries:
    return rms_spl(band_filter(sig, band), window_len, hop, p_ref)


def baseline_stats(spl: SplSeries, low_windows, low_pct: float = 25.0, high_pct: float = 75.0) -> BaselineStats:
    idx = np.asarray(low_windows, dtype=int)
    if len(idx) == 0:
        raise ValueError("empty low-energy window set")
    v = spl.spl[idx]
    return BaselineStats(float(v.mean()), float(v.std()), low_pct, high_pct)


def derive_thresholds(stats: BaselineStats, k_low: float = 9.0, k_high: float = 16.0,
                      p_ref: float = 1.0, min_margin_db: float = 6.0) -> AmplitudeThresholds:
    """Map mean + k*std (dB) to linear amplitudes, keeping at least min_margin_db between them."""
    if not (0 < k_low < k_high):
        raise ValueError("need 0 < k_low < k_high")
    spl_min = stats.mean_spl + k_low * stats.std_spl
    spl_max = max(stats.mean_spl + k_high * stats.std_spl, spl_min + min_margin_db)
    return AmplitudeThresholds(p_ref * 10 ** (spl_min / 20), p_ref * 10 ** (spl_max / 20))


@dataclass
class GateResult:
    report: GateReport
    band: BandSelection
    stats: BaselineStats
    energy: EnergySeries
    spl: SplSeries
    spectrum: Spectrum
    filtered: np.ndarray


def run_gate(sig: AudioSignal, cfg, full_band: bool = False) -> GateResult:
    """Full energy-method chain on one recording.

    cfg needs the GateConfig fields. With full_band, a failed band
    selection falls back to [0, Nyquist] instead of raising.
    """
    energy = short_time_energy(sig, cfg.window_len, cfg.hop)
    low, high = partition_by_energy(energy, cfg.low_pct, cfg.high_pct)
    spec = welch_psd_windows(sig, energy.window_starts[high], cfg.window_len, cfg.welch_seg_len,
                             cfg.welch_overlap, cfg.welch_window)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", BandWarning)
            band = select_band(spec, cfg.drop_db, cfg.slope_eps, cfg.smooth_bins, cfg.lf_search_hz)
    except BandSelectionError:
        if not full_band:
            raise
        band = BandSelection(0.0, sig.sample_rate / 2, True)
    y = band_filter(sig, band)
    spl = rms_spl(y, cfg.window_len, cfg.hop, cfg.p_ref)
    stats = baseline_stats(spl, low, cfg.low_pct, cfg.high_pct)
    th = derive_thresholds(stats, cfg.k_low, cfg.k_high, cfg.p_ref, cfg.min_margin_db)
    report = GateReport(band.f_min, band.f_max, th.lambda_min, th.lambda_max, stats.mean_spl, stats.std_spl)
    return GateResult(report, band, stats, energy, spl, spec, y)
