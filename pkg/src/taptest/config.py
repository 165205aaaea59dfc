"""Pipeline configuration: dataclass defaults, TOML round-trip, strict key checking."""

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from .synth import SessionSpec, TapTemplate, VibrationProfile
from .segment import HEALTHY, UNHEALTHY


class ConfigError(ValueError):
    pass


@dataclass
class GateConfig:
    window_len: int = 2048
    hop: int = 512
    low_pct: float = 25.0
    high_pct: float = 75.0
    welch_seg_len: int = 1024
    welch_overlap: float = 0.5
    welch_window: str = "hann"
    drop_db: float = 20.0
    slope_eps: float = 0.01
    smooth_bins: int = 9
    lf_search_hz: float = 500.0
    p_ref: float = 1.0
    k_low: float = 9.0
    k_high: float = 16.0
    min_margin_db: float = 6.0


@dataclass
class SegmentConfig:
    delta_s: float = 0.1
    L: int = 4096
    pre_fraction: float = 0.1
    # ungated arm: fixed high-pass and fixed amplitude bounds
    naive_highpass_hz: float = 200.0
    naive_lambda_min: float = 0.03
    naive_lambda_max: float = 1.0


@dataclass
class TrainConfig:
    train_fraction: float = 0.6
    variance_target: float = 0.9
    k_clusters: int = 2
    kmeans_restarts: int = 16
    kmeans_tol: float = 1e-6
    kmeans_max_iter: int = 300
    tree_max_depth: int = 4
    tree_min_leaf: int = 2
    positive_class: str = HEALTHY


@dataclass
class TemplateConfig:
    modal_freqs: tuple = ()
    modal_damping: tuple = ()
    base_amplitude: float = 0.5
    duration: float = 0.2
    jitter: float = 0.03
    modal_phase: tuple = ()


@dataclass
class SynthConfig:
    levels_deg: tuple = (0.0, 1.0, 3.0, 5.0)
    frequency_hz: float = 0.5
    duration_s: float = 90.0
    phase_deg: tuple = (0.0, 0.0, 0.0)
    taps_healthy: int = 96
    taps_unhealthy: int = 97
    tap_interval_s: float = 0.466
    noise_floor_db: float = -60.0
    sample_rate: int = 44100
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
    knock_delay_s: float = 0.01
    rumble_per_deg: float = 1e-4
    rattle_rate: float = 0.5
    rattle_exponent: float = 2.0
    rattle_onset_deg: float = 1.0
    rattle_amplitude: tuple = (0.035, 0.06)
    rattle_freq_hz: tuple = (5000.0, 7000.0)
    rattle_decay_s: float = 0.003
    healthy: TemplateConfig = field(default_factory=lambda: TemplateConfig((1800.0, 3400.0), (0.03, 0.05), 0.5, 0.2, 0.03))
    unhealthy: TemplateConfig = field(default_factory=lambda: TemplateConfig((700.0, 1400.0), (0.015, 0.03), 0.7, 0.3, 0.03, (-0.35, 0.35)))

    def templates(self):
        h, u = self.healthy, self.unhealthy
        return (TapTemplate(HEALTHY, h.modal_freqs, h.modal_damping, h.base_amplitude, h.duration, h.jitter,
                            tuple(h.modal_phase)),
                TapTemplate(UNHEALTHY, u.modal_freqs, u.modal_damping, u.base_amplitude, u.duration, u.jitter,
                            tuple(u.modal_phase)))

    def session_spec(self, level_deg: float, seed: int) -> SessionSpec:
        vib = VibrationProfile((level_deg,) * 3, self.frequency_hz, self.duration_s, tuple(self.phase_deg))
        return SessionSpec(
            (self.taps_healthy, self.taps_unhealthy), self.tap_interval_s, self.noise_floor_db,
            self.sample_rate, seed, vib, self.coupling, self.g_floor, self.swing_db, self.swing_tau_s,
            self.hum_db, self.hum_cutoff_hz, self.hum_order,
            self.knock_amplitude, self.knock_freq_hz, self.knock_damping, self.rumble_per_deg, self.rattle_rate,
            self.rattle_exponent, self.rattle_onset_deg, tuple(self.rattle_amplitude), tuple(self.rattle_freq_hz),
            self.rattle_decay_s, self.knock_delay_s)


@dataclass
class PipelineConfig:
    seed: int = 0
    gate: GateConfig = field(default_factory=GateConfig)
    segment: SegmentConfig = field(default_factory=SegmentConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    @classmethod
    def from_dict(cls, d) -> "PipelineConfig":
        return _build(cls, d, "")

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    @classmethod
    def from_toml(cls, text: str) -> "PipelineConfig":
        try:
            return cls.from_dict(tomllib.loads(text))
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"bad TOML: {e}") from e

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        with open(path, "rb") as fh:
            return cls.from_toml(fh.read().decode())

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def _build(cls, d, where):
    if not isinstance(d, dict):
        raise ConfigError(f"[{where or 'root'}] must be a table")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - set(fields))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where or 'root'}]: {', '.join(unknown)}")
    defaults = cls()
    kw = {}
    for name, value in d.items():
        default = getattr(defaults, name)
        key = f"{where}.{name}" if where else name
        if dataclasses.is_dataclass(default):
            kw[name] = _build(type(default), value, key)
        elif isinstance(default, tuple):
            if not isinstance(value, (list, tuple)):
                raise ConfigError(f"{key} must be an array")
            kw[name] = tuple(float(x) for x in value)
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{key} must be a boolean")
            kw[name] = value
        elif isinstance(default, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{key} must be an integer")
            kw[name] = value
        elif isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{key} must be a number")
            kw[name] = float(value)
        elif isinstance(default, str):
            if not isinstance(value, str):
                raise ConfigError(f"{key} must be a string")
            kw[name] = value
        else:
            kw[name] = value
    return cls(**kw)
