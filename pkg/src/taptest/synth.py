"""Synthetic tap sessions on a vibrating platform.

A session is a train of alternating healthy/unhealthy taps. Platform tilt
weakens each strike (impact modulation), and above an onset angle loose
parts rattle, adding short high-frequency bursts between the taps. Each
strike also carries a low-frequency knock from the striker mechanism. The
background is white noise with a slowly wandering level plus a
low-frequency ambient hum and a faint motion-borne rumble.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .dsp import AudioSignal
from .segment import HEALTHY, UNHEALTHY


@dataclass(frozen=True)
class TapTemplate:
    cls: str
    modal_freqs: tuple
    modal_damping: tuple
    base_amplitude: float
    duration: float
    jitter: float = 0.03
    modal_phase: tuple = ()  # radians per mode, empty means all zero

    def __post_init__(self):
        if len(self.modal_freqs) != len(self.modal_damping) or not self.modal_freqs:
            raise ValueError("need one damping ratio per mode")
        if self.modal_phase and len(self.modal_phase) != len(self.modal_freqs):
            raise ValueError("need one phase per mode")
        if not all(0 < z < 1 for z in self.modal_damping):
            raise ValueError("damping ratios must lie in (0, 1)")
        if min(self.modal_freqs) <= 0 or self.duration <= 0 or not 0 <= self.jitter < 1:
            raise ValueError("need positive modal frequencies and duration, jitter in [0, 1)")


HEALTHY_TEMPLATE = TapTemplate(HEALTHY, (1800.0, 3400.0), (0.03, 0.05), 0.5, 0.2)
# opposite phases keep the first lobe dominant once the gate's high-pass strips the
# onset's low-frequency content, so peak alignment does not hop between lobes
UNHEALTHY_TEMPLATE = TapTemplate(UNHEALTHY, (700.0, 1400.0), (0.015, 0.03), 0.7, 0.3, 0.03, (-0.35, 0.35))


@dataclass(frozen=True)
class VibrationProfile:
    amplitude_deg: tuple = (0.0, 0.0, 0.0)  # roll, pitch, yaw
    frequency_hz: float = 0.5
    duration_s: float = 90.0
    phase_deg: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.frequency_hz <= 0 or self.duration_s <= 0 or min(self.amplitude_deg) < 0:
            raise ValueError("invalid vibration profile")

    @classmethod
    def level(cls, deg: float, **kw) -> "VibrationProfile":
        return cls((deg, deg, deg), **kw)

    @property
    def rms_deg(self) -> float:
        return float(np.sqrt(np.mean(np.square(self.amplitude_deg))))


@dataclass(frozen=True)
class SessionSpec:
    taps_per_class: tuple = (96, 97)  # healthy, unhealthy
    tap_interval_s: float = 0.466
    noise_floor_db: float = -60.0
    sample_rate: int = 44100
    seed: int = 0
    vibration: VibrationProfile = field(default_factory=VibrationProfile)
    coupling: float = 0.12
    g_floor: float = 0.2
    swing_db: float = 6.0
    swing_tau_s: float = 0.05
    hum_db: float = -50.0
    hum_cutoff_hz: float = 40.0
    hum_order: int = 4
    knock_amplitude: float = 0.6
    knock_freq_hz: float = 40.0
    knock_damping: float = 0.15
    rumble_per_deg: float = 1e-4
    rattle_rate: float = 0.5
    rattle_exponent: float = 2.0
    rattle_onset_deg: float = 1.0
    rattle_amplitude: tuple = (0.035, 0.06)
    rattle_freq_hz: tuple = (5000.0, 7000.0)
    rattle_decay_s: float = 0.003
    knock_delay_s: float = 0.01  # lets the tap's first cycles stand clear of the thump


@dataclass
class Session:
    signal: AudioSignal
    truth_index: np.ndarray
    truth_class: np.ndarray
    strike_gain: np.ndarray
    artifact_index: np.ndarray


def synth_tap(template: TapTemplate, strike_gain: float, seed: int, sample_rate: int = 44100) -> np.ndarray:
    if strike_gain < 0:
        raise ValueError("strike_gain must be >= 0")
    if max(template.modal_freqs) * (1 + template.jitter) >= sample_rate / 2:
        raise ValueError("modal frequency at or above Nyquist")
    rng = np.random.default_rng(seed)
    j = template.jitter
    t = np.arange(int(round(template.duration * sample_rate))) / sample_rate
    w = np.zeros(len(t))
    phases = template.modal_phase or (0.0,) * len(template.modal_freqs)
    for f, z, p0 in zip(template.modal_freqs, template.modal_damping, phases):
        f = f * (1 + rng.uniform(-j, j))
        phi = p0 + rng.uniform(-j, j) * np.pi
        w += np.exp(-2 * np.pi * f * z * t) * np.sin(2 * np.pi * f * t + phi)
    peak = np.max(np.abs(w))
    amp = strike_gain * template.base_amplitude * (1 + rng.uniform(-j, j))
    return w * (amp / peak) if peak > 0 else w


def impact_modulation(vibration: VibrationProfile, t, coupling: float = 0.12, g_floor: float = 0.2):
    """Strike gain at time t: 1 - coupling * (RMS tilt over the axes), clamped to [g_floor, 1]."""
    if coupling < 0:
        raise ValueError("coupling must be >= 0")
    t = np.asarray(t, dtype=float)
    amp = np.asarray(vibration.amplitude_deg, dtype=float)
    ph = np.deg2rad(np.asarray(vibration.phase_deg, dtype=float))
    ang = amp[:, None] * np.sin(2 * np.pi * vibration.frequency_hz * t.reshape(1, -1) + ph[:, None])
    theta = np.sqrt(np.mean(ang ** 2, axis=0)).reshape(t.shape)
    g = np.clip(1 - coupling * theta, g_floor, 1.0)
    return float(g) if g.ndim == 0 else g


def _level_swing(rng, n, fs, std_db, tau_s):
    """Ornstein-Uhlenbeck wander of the noise level in dB, built at 1 kHz and interpolated."""
    if std_db <= 0:
        return np.zeros(n)
    rate = 1000.0
    m = int(n / fs * rate) + 2
    a = np.exp(-1 / (rate * tau_s))
    e = rng.normal(0, std_db * np.sqrt(1 - a * a), m)
    e[0] = rng.normal(0, std_db)
    z = sps.lfilter([1.0], [1.0, -a], e)
    return np.interp(np.arange(n) * (rate / fs), np.arange(m), z)


def _knock(spec: SessionSpec, fs):
    """Low-frequency thump of the striker mechanism, one per strike."""
    if spec.knock_amplitude <= 0:
        return np.zeros(0)
    f, z = spec.knock_freq_hz, spec.knock_damping
    t = np.arange(int(round(5 / (2 * np.pi * f * z) * fs))) / fs  # ~5 time constants
    k = np.exp(-2 * np.pi * f * z * t) * np.sin(2 * np.pi * f * t)
    return k * (spec.knock_amplitude / np.max(np.abs(k)))


def _class_order(n_h, n_u):
    """Alternate classes, starting with the larger one; leftovers go at the end."""
    first, second = (UNHEALTHY, HEALTHY) if n_u >= n_h else (HEALTHY, UNHEALTHY)
    a, b = max(n_h, n_u), min(n_h, n_u)
    out = []
    for i in range(a):
        out.append(first)
        if i < b:
            out.append(second)
    return out


def synth_session(spec: SessionSpec, healthy: TapTemplate = HEALTHY_TEMPLATE,
                  unhealthy: TapTemplate = UNHEALTHY_TEMPLATE) -> Session:
    fs = spec.sample_rate
    dur = spec.vibration.duration_s
    n = int(round(dur * fs))
    order = _class_order(*spec.taps_per_class)
    if len(order) * spec.tap_interval_s > dur:
        raise ValueError(f"{len(order)} taps at {spec.tap_interval_s}s do not fit in {dur}s")
    r_taps, r_noise, r_swing, r_hum, r_rattle = (np.random.default_rng(s)
                                                  for s in np.random.SeedSequence(spec.seed).spawn(5))
    templates = {HEALTHY: healthy, UNHEALTHY: unhealthy}
    x = np.zeros(n)
    t_strike = (np.arange(len(order)) + 0.5) * spec.tap_interval_s
    gains = np.atleast_1d(impact_modulation(spec.vibration, t_strike, spec.coupling, spec.g_floor))
    truth = np.zeros(len(order), dtype=int)
    knock = _knock(spec, fs)
    k_delay = int(round(spec.knock_delay_s * fs))
    onsets = np.zeros(len(order), dtype=int)
    for i, (c, t0, g) in enumerate(zip(order, t_strike, gains)):
        w = synth_tap(templates[c], g, int(r_taps.integers(2 ** 63)), fs)
        k = int(round(t0 * fs))
        onsets[i] = k
        w = w[:n - k]
        x[k:k + len(w)] += w
        kn = g * knock[:max(0, n - k - k_delay)]
        x[k + k_delay:k + k_delay + len(kn)] += kn

    t = np.arange(n) / fs
    swing = _level_swing(r_swing, n, fs, spec.swing_db, spec.swing_tau_s)
    x += r_noise.normal(0, 1, n) * 10 ** ((spec.noise_floor_db + swing) / 20)
    if spec.hum_db is not None and spec.hum_db > -200:
        sos = sps.butter(spec.hum_order, spec.hum_cutoff_hz, fs=fs, output="sos")
        hum = sps.sosfilt(sos, r_hum.normal(0, 1, n))
        x += hum * (10 ** (spec.hum_db / 20) / hum.std())

    deg = spec.vibration.rms_deg
    f0 = spec.vibration.frequency_hz
    for h in range(1, int(2.0 // f0) + 1):
        x += spec.rumble_per_deg * deg / h * np.sin(2 * np.pi * h * f0 * t)

    # rattle rate grows as a power of the tilt in excess of the onset angle
    rate = spec.rattle_rate * max(0.0, deg - spec.rattle_onset_deg) ** spec.rattle_exponent
    count = r_rattle.poisson(rate * dur)
    times = np.sort(r_rattle.uniform(0.05, dur - 0.05, count))
    tt = np.arange(int(5 * spec.rattle_decay_s * fs)) / fs
    arts = []
    for tc in times:
        f = r_rattle.uniform(*spec.rattle_freq_hz)
        burst = np.exp(-tt / spec.rattle_decay_s) * np.sin(2 * np.pi * f * tt)
        burst *= r_rattle.uniform(*spec.rattle_amplitude) / np.max(np.abs(burst))
        k = int(round(tc * fs))
        burst = burst[:n - k]
        x[k:k + len(burst)] += burst
        arts.append(k + int(np.argmax(np.abs(burst))))

    # ground truth is the peak of the finished signal over the tap's first cycles
    head = max(1, int(0.005 * fs))
    for i, k in enumerate(onsets):
        truth[i] = k + int(np.argmax(np.abs(x[k:k + head])))

    return Session(AudioSignal(x, fs), truth, np.array(order, dtype=object), gains, np.array(arts, dtype=int))
