"""WAV I/O, resampling, segmentation and synthetic noise corpora."""
from __future__ import annotations

import csv
import struct
import warnings
from dataclasses import dataclass, field
from math import gcd
from pathlib import Path

import numpy as np
from scipy import signal as sps
from scipy.io import wavfile

from .core import ConfigError, FormatError, ShapeError, Signal, as_1d

TARGET_RATE = 16000
SEGMENT_SECONDS = 3.0
NOISE_KINDS = ("white", "pink", "engine_harmonics", "modulated_babble_like")


def read_wav(path) -> Signal:
    """Load a mono PCM16 or float32 WAV (first channel of multichannel files).

    PCM16 samples are scaled by 1/32768 so full scale maps to [-1, 1).
    """
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except (ValueError, struct.error, EOFError, wavfile.WavFileWarning) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if data.ndim == 2:
        data = data[:, 0]
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise FormatError(f"{path}: unsupported encoding {data.dtype}")
    return Signal(samples, float(rate))


@dataclass(frozen=True)
class WavWriteInfo:
    path: Path
    encoding: str
    clipped: int = 0


def write_wav(sig, path, encoding: str = "float32", sample_rate: float | None = None) -> WavWriteInfo:
    """Write a mono WAV. PCM16 saturates out-of-range samples and counts them."""
    rate = sample_rate or getattr(sig, "sample_rate", None)
    if rate is None:
        raise ConfigError("sample rate required for a bare array")
    x = as_1d(sig, "signal")
    if not np.all(np.isfinite(x)):
        raise ShapeError("cannot write non-finite samples")
    clipped = 0
    if encoding == "float32":
        data = x.astype(np.float32)
    elif encoding == "pcm16":
        scaled = np.rint(x * 32768.0)
        clipped = int(np.count_nonzero((scaled > 32767) | (scaled < -32768)))
        data = np.clip(scaled, -32768, 32767).astype(np.int16)
    else:
        raise ConfigError(f"unknown encoding {encoding!r}")
    wavfile.write(path, int(round(rate)), data)
    return WavWriteInfo(Path(path), encoding, clipped)


def resample(sig: Signal, target_rate: float = TARGET_RATE) -> Signal:
    """Polyphase resampling with a Kaiser-windowed sinc anti-aliasing filter.

    Passband is flat to within 0.1 dB up to 0.45 of the lower rate and the
    stopband starts before its Nyquist frequency with >= 60 dB rejection.
    """
    src = sig.sample_rate
    for rate in (src, target_rate):
        if not 8000 <= rate <= 48000:
            raise ConfigError(f"rate {rate} outside 8-48 kHz")
    if src == target_rate:
        return sig
    if src != int(src) or target_rate != int(target_rate):
        raise ConfigError("rates must be integral")
    g = gcd(int(src), int(target_rate))
    up, down = int(target_rate) // g, int(src) // g
    # filter runs at src * up; edges relative to the lower of the two rates
    low = min(src, target_rate)
    fs_hi = src * up
    numtaps, beta = sps.kaiserord(75.0, (0.49 - 0.45) * low / (fs_hi / 2))
    numtaps |= 1
    taps = sps.firwin(numtaps, 0.47 * low, window=("kaiser", beta), fs=fs_hi) * up
    y = sps.resample_poly(np.asarray(sig), up, down, window=taps)
    return Signal(y, float(target_rate))


@dataclass
class SegmentSet:
    segments: list[Signal]
    labels: list[str] = field(default_factory=list)
    seed: int = 0

    def __len__(self):
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)


def peak_normalize(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    peak = np.max(np.abs(x))
    if peak == 0:
        raise ShapeError("cannot normalize an all-zero signal")
    return x / peak


def segment_normalize(sig: Signal, seconds: float = SEGMENT_SECONDS, label: str = "",
                      seed: int = 0) -> SegmentSet:
    """Non-overlapping fixed-length slices, each peak-normalized to 1."""
    n = int(round(seconds * sig.sample_rate))
    x = np.asarray(sig)
    count = len(x) // n
    if count == 0:
        raise ShapeError(f"signal shorter than one {seconds} s segment")
    segs = [Signal(peak_normalize(x[i * n : (i + 1) * n]), sig.sample_rate) for i in range(count)]
    return SegmentSet(segs, [f"{label}#{i}" for i in range(count)], seed)


def _shaped_noise(rng, n, fs, shape):
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1 / fs)
    return np.fft.irfft(spec * shape(f), n)


def synth_noise(kind: str, seconds: float, seed: int = 0,
                sample_rate: float = TARGET_RATE) -> Signal:
    """Deterministic synthetic noise, peak-normalized.

    ``pink`` falls at 3 dB per octave; ``engine_harmonics`` is a 80-120 Hz
    firing tone with twelve harmonics over a pink floor;
    ``modulated_babble_like`` sums speech-band noises with 2-8 Hz envelopes.
    """
    if kind not in NOISE_KINDS:
        raise ConfigError(f"unknown noise kind {kind!r}; choose from {NOISE_KINDS}")
    if seconds <= 0:
        raise ConfigError("seconds must be positive")
    rng = np.random.default_rng(seed)
    n = int(round(seconds * sample_rate))
    fs = sample_rate
    t = np.arange(n) / fs

    def pink_shape(f):
        return np.where(f > 0, 1 / np.sqrt(np.maximum(f, 1e-9)), 0.0)

    if kind == "white":
        x = rng.standard_normal(n)
    elif kind == "pink":
        x = _shaped_noise(rng, n, fs, pink_shape)
    elif kind == "engine_harmonics":
        f0 = rng.uniform(80, 120)
        x = np.zeros(n)
        for k in range(1, 13):
            if k * f0 >= fs / 2:
                break
            x += k**-0.5 * np.sin(2 * np.pi * k * f0 * t + rng.uniform(0, 2 * np.pi))
        floor = _shaped_noise(rng, n, fs, pink_shape)
        x += 0.05 * np.std(x) / np.std(floor) * floor
    else:
        sos = sps.butter(4, (300, 3400), btype="bandpass", fs=fs, output="sos")
        x = np.zeros(n)
        for _ in range(6):
            rate = rng.uniform(2, 8)
            envelope = 1 + 0.9 * np.sin(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi))
            x += envelope * sps.sosfilt(sos, rng.standard_normal(n)) * rng.uniform(0.5, 1.0)
    return Signal(peak_normalize(x), float(fs))


def scan_corpus(directory, manifest_path=None) -> list[tuple[str, str]]:
    """List WAV files under ``directory``; label is the parent folder name.

    When ``manifest_path`` is given the (path, label) pairs are written there
    as CSV with a header row.
    """
    root = Path(directory)
    entries = [(str(p), p.parent.name) for p in sorted(root.rglob("*.wav"))]
    if manifest_path is not None:
        with open(manifest_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["path", "label"])
            writer.writerows(entries)
    return entries


def load_corpus(manifest_path, seconds: float = SEGMENT_SECONDS, seed: int = 0) -> SegmentSet:
    """Read every file of a manifest, resample to 16 kHz and segment it."""
    segments, labels = [], []
    with open(manifest_path, newline="") as fh:
        for row in csv.DictReader(fh):
            sig = resample(read_wav(row["path"]), TARGET_RATE)
            try:
                part = segment_normalize(sig, seconds, row["label"])
            except ShapeError:
                continue
            segments += part.segments
            labels += part.labels
    if not segments:
        raise ConfigError(f"no usable segments in {manifest_path}")
    return SegmentSet(segments, labels, seed)


def synthetic_corpus(kinds, seconds: float, seed: int = 0) -> SegmentSet:
    """Desk-scale training set: ``seconds`` of each noise kind, cut into 3 s segments."""
    segments, labels = [], []
    for i, kind in enumerate(kinds):
        part = segment_normalize(synth_noise(kind, seconds, seed + 1000 * i), label=kind)
        segments += part.segments
        labels += part.labels
    return SegmentSet(segments, labels, seed)
