"""Convolution engines, A-weighting and the two cancellation metrics.

All convolutions here are causal and truncated to the length of the input,
which is the form every signal path in a feedforward ANC loop takes.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import DomainError, NumericalError, ShapeError, as_1d

METRIC_FLOOR_DB = -120.0
SPECTROGRAM_FLOOR_DB = -100.0

# analog A-weighting pole frequencies (Hz)
_A_POLES = (20.598997, 107.65265, 737.86223, 12194.217)


def direct_convolve(x, h) -> np.ndarray:
    """Causal convolution ``out[n] = sum_k h[k] x[n-k]`` truncated to len(x)."""
    x = as_1d(x, "x")
    h = as_1d(h, "h")
    return np.convolve(x, h)[: len(x)]


def fast_convolve(x, h, block: int | None = None) -> np.ndarray:
    """Overlap-save FFT convolution with the same contract as :func:`direct_convolve`.

    ``block`` is the FFT size; it defaults to the smallest power of two that is
    at least ``2 * len(h)`` (and at least 64).
    """
    x = as_1d(x, "x")
    h = as_1d(h, "h")
    n, m = len(x), len(h)
    if block is None:
        block = max(64, 1 << int(np.ceil(np.log2(2 * m))))
    if block < 2 * m or block & (block - 1):
        raise ShapeError(f"block must be a power of two >= 2*len(h), got {block}")
    step = block - m + 1
    H = np.fft.rfft(h, block)
    # m-1 zeros of history in front, tail-padded to whole blocks
    nblocks = -(-n // step)
    padded = np.zeros((nblocks - 1) * step + block)
    padded[m - 1 : m - 1 + n] = x
    frames = np.lib.stride_tricks.sliding_window_view(padded, block)[::step][:nblocks]
    out = np.fft.irfft(np.fft.rfft(frames, axis=1) * H, block, axis=1)[:, m - 1 :]
    return out.reshape(-1)[:n]


def convolve(x, h) -> np.ndarray:
    """Pick the cheaper of the two engines."""
    x = np.asarray(x, dtype=float)
    h = np.asarray(h, dtype=float)
    if len(h) <= 32 or len(x) * len(h) <= 1 << 16:
        return direct_convolve(x, h)
    return fast_convolve(x, h)


def convolve_adjoint(g, h) -> np.ndarray:
    """Adjoint of the truncated causal convolution: ``out[m] = sum_k h[k] g[m+k]``."""
    g = np.asarray(g, dtype=float)
    return convolve(g[::-1], h)[::-1]


def a_weighting_db(freqs) -> np.ndarray:
    """Analog A-weighting magnitude in dB, 0 dB at 1 kHz."""
    f2 = np.asarray(freqs, dtype=float) ** 2
    p1, p2, p3, p4 = (p * p for p in _A_POLES)

    def mag(f2):
        with np.errstate(divide="ignore"):
            return (p4 * f2 * f2) / ((f2 + p1) * np.sqrt((f2 + p2) * (f2 + p3)) * (f2 + p4))

    with np.errstate(divide="ignore"):
        return 20 * np.log10(mag(f2) / mag(1000.0**2))


def a_weighting_fir(sample_rate: float = 16000, length: int = 257) -> np.ndarray:
    """Linear-phase FIR approximating the analog A-weighting curve.

    The zero-phase cosine series is first fitted in the least-squares sense
    with relative-error weighting on a log-spaced frequency grid, then refined
    by damped Gauss-Newton on the dB error. Absolute-error rows on a linear
    grid up to Nyquist keep the taps small. The result is delayed by
    ``(length - 1) // 2`` samples and scaled to exactly 0 dB at 1 kHz.
    """
    if not 8000 <= sample_rate <= 48000:
        raise DomainError(f"unsupported sample rate {sample_rate}")
    if length < 129 or length % 2 == 0:
        raise DomainError("length must be odd and >= 129")
    return _a_weighting_fir(float(sample_rate), int(length)).copy()


@lru_cache(maxsize=16)
def _a_weighting_fir(sample_rate: float, length: int) -> np.ndarray:
    half = (length - 1) // 2
    lags = np.arange(half + 1)
    # log grid carries the dB fit; a linear grid to Nyquist keeps the
    # response bounded where the log grid is sparse, and a tiny ridge keeps
    # the normal equations well posed
    f_log = np.geomspace(15.0, sample_rate / 2, 2000)
    f_lin = np.linspace(0.0, sample_rate / 2, 2000)
    b_log = np.cos(np.outer(2 * np.pi * f_log / sample_rate, lags))
    b_lin = np.cos(np.outer(2 * np.pi * f_lin / sample_rate, lags))
    target = a_weighting_db(f_log)
    mag_log = 10 ** (target / 20)
    mag_lin = np.zeros_like(f_lin)
    mag_lin[1:] = 10 ** (a_weighting_db(f_lin[1:]) / 20)
    ridge = 1e-3 * np.eye(half + 1)

    a = np.vstack([b_log / mag_log[:, None], b_lin, ridge])
    rhs = np.concatenate([np.ones_like(f_log), mag_lin, np.zeros(half + 1)])
    c = np.linalg.lstsq(a, rhs, rcond=None)[0]

    def residual(c):
        db = 20 * np.log10(np.abs(b_log @ c)) - target
        return np.concatenate([db, 20 * (b_lin @ c - mag_lin), 20 * ridge @ c])

    def jacobian(c):
        return np.vstack([(20 / np.log(10)) * b_log / (b_log @ c)[:, None], 20 * b_lin, 20 * ridge])

    r = residual(c)
    cost = r @ r
    damping = 1e-3
    for _ in range(30):
        jac = jacobian(c)
        jtj = jac.T @ jac
        grad = jac.T @ r
        while damping < 1e8:
            step = np.linalg.solve(jtj + damping * np.diag(np.diag(jtj)), -grad)
            r_new = residual(c + step)
            if r_new @ r_new < cost:
                c, r, cost = c + step, r_new, r_new @ r_new
                damping *= 0.3
                break
            damping *= 10
        else:
            break

    h = np.empty(length)
    h[half] = c[0]
    h[half + 1 :] = c[1:] / 2
    h[:half] = c[:0:-1] / 2
    gain_1k = abs(np.exp(-2j * np.pi * 1000 / sample_rate * np.arange(length)) @ h)
    return h / gain_1k


def _ratio_db(num: float, den: float) -> float:
    if den <= 0:
        raise NumericalError("reference signal has zero energy")
    if num <= 0:
        return METRIC_FLOOR_DB
    return max(METRIC_FLOOR_DB, 10 * np.log10(num / den))


def _check_pair(e, d):
    e = as_1d(e, "e")
    d = as_1d(d, "d")
    if len(e) != len(d):
        raise ShapeError(f"length mismatch: {len(e)} vs {len(d)}")
    return e, d


def nmse_db(e, d) -> float:
    """Error-to-disturbance power ratio in dB, floored at -120 dB."""
    e, d = _check_pair(e, d)
    return _ratio_db(float(e @ e), float(d @ d))


def dba_delta_db(e, d, sample_rate: float = 16000, a_fir=None) -> float:
    """A-weighted power ratio of error to disturbance in dB (negative = reduction)."""
    e, d = _check_pair(e, d)
    a = a_weighting_fir(sample_rate) if a_fir is None else np.asarray(a_fir, dtype=float)
    ae = convolve(e, a)
    ad = convolve(d, a)
    return _ratio_db(float(ae @ ae), float(ad @ ad))


@dataclass(frozen=True)
class MetricsReport:
    algorithm: str
    noise: str
    eta2: str
    nmse_db: float
    dba_delta_db: float
    status: str = "ok"
    note: str = ""


def evaluate(e, d, *, algorithm: str, noise: str, eta2: str,
             sample_rate: float = 16000) -> MetricsReport:
    return MetricsReport(
        algorithm=algorithm,
        noise=noise,
        eta2=eta2,
        nmse_db=nmse_db(e, d),
        dba_delta_db=dba_delta_db(e, d, sample_rate),
    )


@dataclass(frozen=True)
class Spectrogram:
    magnitudes_db: np.ndarray  # frames x bins
    frame_size: int
    hop: int
    sample_rate: float

    @property
    def frequencies(self) -> np.ndarray:
        return np.fft.rfftfreq(self.frame_size, 1 / self.sample_rate)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.magnitudes_db.shape[0]) * self.hop / self.sample_rate

    def to_csv(self, path) -> None:
        """One row per frame; header row holds the bin frequencies in Hz."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"{f:.6g}" for f in self.frequencies])
            for row in self.magnitudes_db:
                writer.writerow([f"{v:.4f}" for v in row])

    @classmethod
    def from_csv(cls, path, hop: int, sample_rate: float) -> "Spectrogram":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        mags = np.array([[float(v) for v in row] for row in rows[1:]])
        return cls(mags, 2 * (len(rows[0]) - 1), hop, sample_rate)


def stft_spectrogram(x, frame: int = 512, hop: int = 256,
                     sample_rate: float = 16000) -> Spectrogram:
    """Hann-windowed magnitude spectrogram in dB (20 log10 |X|, floor -100 dB)."""
    x = np.asarray(x, dtype=float)
    if frame <= 0 or frame & (frame - 1):
        raise ShapeError("frame must be a power of two")
    if not 0 < hop <= frame:
        raise ShapeError("hop must satisfy 0 < hop <= frame")
    if x.ndim != 1 or len(x) < frame:
        raise ShapeError("signal shorter than one frame")
    window = np.hanning(frame + 1)[:-1]  # periodic Hann
    frames = np.lib.stride_tricks.sliding_window_view(x, frame)[::hop]
    mag = np.abs(np.fft.rfft(frames * window, axis=1))
    with np.errstate(divide="ignore"):
        db = 20 * np.log10(mag)
    return Spectrogram(np.maximum(db, SPECTROGRAM_FLOOR_DB), frame, hop, sample_rate)
