"""16-bit PCM mono WAV and ground-truth CSV I/O."""

import csv
import wave

import numpy as np

from .dsp import AudioSignal


class WavFormatError(ValueError):
    pass


def to_pcm16(x) -> np.ndarray:
    return np.round(np.clip(np.asarray(x, dtype=float), -1.0, 1.0) * 32767).astype("<i2")


def from_pcm16(a) -> np.ndarray:
    return np.asarray(a, dtype=float) / 32767


def write_wav(path, sig: AudioSignal):
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(sig.sample_rate))
        w.writeframes(to_pcm16(sig.samples).tobytes())


def read_wav(path) -> AudioSignal:
    try:
        w = wave.open(str(path), "rb")
    except wave.Error as e:
        raise WavFormatError(f"{path}: {e}") from e
    with w:
        if w.getnchannels() != 1 or w.getsampwidth() != 2 or w.getcomptype() != "NONE":
            raise WavFormatError(f"{path}: only 16-bit PCM mono is supported "
                                 f"(got {w.getnchannels()} ch, {8 * w.getsampwidth()} bit)")
        fs = w.getframerate()
        raw = w.readframes(w.getnframes())
    samples = from_pcm16(np.frombuffer(raw, dtype="<i2"))
    if len(samples) == 0:
        raise WavFormatError(f"{path}: no samples")
    return AudioSignal(samples, fs)


def write_truth(path, indices, classes):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_index", "class"])
        for i, c in zip(indices, classes):
            w.writerow([int(i), c])


def read_truth(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return (np.array([int(r["sample_index"]) for r in rows], dtype=int),
            np.array([r["class"] for r in rows], dtype=object))
