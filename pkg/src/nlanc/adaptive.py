"""Classical feedforward ANC baselines.

Every algorithm simulates the closed loop against the full nonlinear plant
and uses the exact secondary path as its model. Runs stop as soon as the
running error energy exceeds ``DIVERGENCE_RATIO`` times the disturbance
energy; the remaining samples are then reported with the controller off.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy import linalg

from .acoustics import PlantModel, sef
from .core import ConfigError, DomainError, NumericalError, ShapeError, as_1d
from .dsp import convolve, fast_convolve, nmse_db

DIVERGENCE_RATIO = 1e6


@dataclass
class RunReport:
    error: np.ndarray
    disturbance: np.ndarray
    control: np.ndarray
    final_weights: np.ndarray
    diverged: bool = False
    converged_at: int | None = None
    label: str = ""

    def steady_state_nmse(self, fraction: float = 0.2) -> float:
        """NMSE over the trailing ``fraction`` of the run."""
        start = int(len(self.error) * (1 - fraction))
        return nmse_db(self.error[start:], self.disturbance[start:])

    @property
    def nmse_db(self) -> float:
        return nmse_db(self.error, self.disturbance)


def filtered_reference(x, s_hat) -> np.ndarray:
    """Reference filtered through the secondary-path model, ``s_hat * x``."""
    s_hat = np.asarray(s_hat, dtype=float)
    if s_hat.ndim != 1 or s_hat.size == 0:
        raise ShapeError("secondary path model is empty")
    return convolve(as_1d(x, "x"), s_hat)


def _prepare(x, plant: PlantModel, taps: int, mu: float, w0, disturbance):
    x = as_1d(x, "x")
    if not np.all(np.isfinite(x)):
        raise DomainError("reference contains non-finite samples")
    if taps < 1:
        raise ConfigError("filter length must be >= 1")
    if not mu > 0:
        raise ConfigError("step size must be positive")
    d = plant.disturbance(x) if disturbance is None else as_1d(disturbance, "disturbance")
    if len(d) != len(x):
        raise ShapeError("disturbance and reference differ in length")
    w = np.zeros(taps) if w0 is None else np.array(w0, dtype=float)
    if w.shape != (taps,):
        raise ShapeError(f"initial weights must have shape ({taps},)")
    return x, d, w


def _converged_at(e, d, window: int) -> int | None:
    """First window start after which windowed NMSE stays within 1 dB of the final level."""
    n = len(e) // window
    if n < 2:
        return None
    ee = np.add.reduceat(e[: n * window] ** 2, np.arange(0, n * window, window))
    dd = np.add.reduceat(d[: n * window] ** 2, np.arange(0, n * window, window))
    with np.errstate(divide="ignore", invalid="ignore"):
        level = 10 * np.log10(np.maximum(ee, 1e-300) / np.maximum(dd, 1e-300))
    tail = level[-max(1, n // 5):].mean()
    above = np.nonzero(level > tail + 1.0)[0]
    if len(above) == 0:
        return 0
    if above[-1] == n - 1:
        return None
    return int((above[-1] + 1) * window)


@numba.njit(cache=True)
def _sef_scalar(y, eta2):
    if math.isinf(eta2):
        return y
    eta = math.sqrt(eta2)
    return math.sqrt(math.pi / 2) * eta * math.erf(y / (math.sqrt(2.0) * eta))


@numba.njit(cache=True)
def _fxlms_loop(x, d, s, w, mu, eta2, lam, thf, energy_floor, ratio):
    # returns (e, y, halted_at); w is updated in place
    n_samples = x.shape[0]
    taps = w.shape[0]
    ls = s.shape[0]
    e = np.empty(n_samples)
    y_out = np.zeros(n_samples)
    fy = np.zeros(n_samples)
    xg = np.zeros(n_samples)
    r = np.zeros(n_samples)
    e_energy = 0.0
    d_energy = energy_floor
    for n in range(n_samples):
        m = min(taps, n + 1)
        y = 0.0
        for j in range(m):
            y += w[j] * x[n - j]
        y_out[n] = y
        fy[n] = _sef_scalar(y, eta2)
        u = 0.0
        for k in range(min(ls, n + 1)):
            u += s[k] * fy[n - k]
        err = d[n] + u
        e[n] = err
        # filtered reference; THF scales the reference by the tanh slope first
        if thf:
            t = math.tanh(y / lam)
            xg[n] = (1.0 - t * t) * x[n]
        else:
            xg[n] = x[n]
        acc = 0.0
        for k in range(min(ls, n + 1)):
            acc += s[k] * xg[n - k]
        r[n] = acc
        step = mu * err
        for j in range(m):
            w[j] -= step * r[n - j]
        e_energy += err * err
        d_energy += d[n] * d[n]
        if not (e_energy <= ratio * d_energy):
            return e, y_out, n
    return e, y_out, -1


def td_fxlms_step(w, x_vec, r_vec, e, mu):
    """One filtered-reference LMS update, ``w - mu * e * r``."""
    return np.asarray(w, dtype=float) - mu * e * np.asarray(r_vec, dtype=float)


def _finish(x, d, e, y, w, halted, label, window):
    diverged = halted >= 0
    if diverged:
        e = e.copy()
        e[halted:] = d[halted:]
        y = y.copy()
        y[halted:] = 0.0
        w = np.nan_to_num(w, nan=0.0, posinf=0.0, neginf=0.0)
        if not np.all(np.isfinite(e[:halted])):
            e[:halted] = np.nan_to_num(e[:halted], nan=0.0, posinf=0.0, neginf=0.0)
    conv = None if diverged else _converged_at(e, d, window)
    return RunReport(e, d, y, w, diverged, conv, label)


def _run_fxlms(x, plant, taps, mu, w0, disturbance, lam, thf, label):
    x, d, w = _prepare(x, plant, taps, mu, w0, disturbance)
    floor = float(np.mean(d * d)) * taps
    e, y, halted = _fxlms_loop(x, d, plant.secondary, w, float(mu), float(plant.eta2),
                               float(lam), thf, floor, DIVERGENCE_RATIO)
    return _finish(x, d, e, y, w, halted, label, taps)


def td_fxlms_run(x, plant: PlantModel, taps: int, mu: float, *, w0=None,
                 disturbance=None) -> RunReport:
    """Time-domain FxLMS, updated every sample with the filtered-reference vector."""
    return _run_fxlms(x, plant, taps, mu, w0, disturbance, math.inf, False,
                      f"TD-FxLMS({taps})")


def thf_fxlms_run(x, plant: PlantModel, taps: int, mu: float, lam: float | None = None,
                  *, w0=None, disturbance=None) -> RunReport:
    """FxLMS with a tanh loudspeaker model ``lam * tanh(y / lam)``.

    The reference is scaled by the model slope ``sech^2(y(n) / lam)`` before
    secondary-path filtering. ``lam`` defaults to the SEF saturation level
    ``sqrt(eta2 pi / 2)`` so both models share their asymptotes.
    """
    if lam is None:
        lam = math.sqrt(plant.eta2 * math.pi / 2)
    if not lam > 0:
        raise ConfigError("lambda must be positive")
    return _run_fxlms(x, plant, taps, mu, w0, disturbance, lam, True,
                      f"THF-FxLMS({taps})")


def stability_bound(x, plant: PlantModel, taps: int) -> float:
    """Classic LMS step bound ``2 / (L * mean power of r)``."""
    r = filtered_reference(x, plant.secondary)
    return 2.0 / (taps * float(np.mean(r * r)))


class _BlockLoop:
    """Shared overlap-save machinery for the block algorithms.

    Blocks are ``taps`` samples long and use FFTs of ``2 * taps`` points; the
    controller output of a block uses the weights from before that block.
    """

    def __init__(self, x, d, plant, taps, w):
        if taps & (taps - 1):
            raise ConfigError(f"filter length must be a power of two, got {taps}")
        self.x, self.d, self.plant, self.taps = x, d, plant, taps
        n = len(x)
        self.nblocks = -(-n // taps)
        total = self.nblocks * taps
        self.xp = np.concatenate([np.zeros(taps), x, np.zeros(total - n)])
        self.dp = np.concatenate([d, np.zeros(total - n)])
        self.fy = np.zeros(total)
        self.e = np.zeros(total)
        self.y = np.zeros(total)
        self.W = np.fft.rfft(w, 2 * taps)
        self.s = plant.secondary

    def weights(self) -> np.ndarray:
        return np.fft.irfft(self.W, 2 * self.taps)[: self.taps]

    def apply_gradient(self, grad_time, mu):
        # gradient constraint: only the first L lags survive
        self.W = self.W - mu * np.fft.rfft(grad_time[: self.taps], 2 * self.taps)

    def process(self, b):
        """Controller output, loudspeaker and plant for block ``b``; returns its slice."""
        L = self.taps
        lo, hi = b * L, (b + 1) * L
        X = np.fft.rfft(self.xp[lo : hi + L])
        y = np.fft.irfft(X * self.W, 2 * L)[L:]
        self.y[lo:hi] = y
        self.fy[lo:hi] = sef(y, self.plant.eta2)
        ls = len(self.s)
        start = max(0, lo - ls + 1)
        u = np.convolve(self.fy[start:hi], self.s)[lo - start : hi - start]
        self.e[lo:hi] = self.dp[lo:hi] + u
        return slice(lo, hi)


def _block_run(x, plant, taps, mu, w0, disturbance, label, update):
    x, d, w = _prepare(x, plant, taps, mu, w0, disturbance)
    loop = _BlockLoop(x, d, plant, taps, w)
    n = len(x)
    floor = float(np.mean(d * d)) * taps
    e_energy, d_energy, halted = 0.0, floor, -1
    for b in range(loop.nblocks):
        sl = loop.process(b)
        e_energy += float(loop.e[sl] @ loop.e[sl])
        d_energy += float(loop.dp[sl] @ loop.dp[sl])
        if not e_energy <= DIVERGENCE_RATIO * d_energy or not np.all(np.isfinite(loop.W)):
            halted = sl.start
            break
        update(loop, b)
    w = loop.weights()
    return _finish(x, d, loop.e[:n], loop.y[:n], w, min(halted, n - 1) if halted >= 0 else -1,
                   label, taps)


def fd_fxnlms_run(x, plant: PlantModel, taps: int, mu: float, *, forgetting: float = 0.9,
                  regularization: float = 0.1, normalize: bool = True, w0=None,
                  disturbance=None) -> RunReport:
    """Frequency-domain FxLMS with per-bin power normalization.

    Overlap-save with block length ``taps``. Each bin's step is divided by an
    exponentially averaged power of the filtered reference (``forgetting`` is
    the averaging factor) plus ``regularization`` times its mean over bins.
    The floor matters for tonal references: bins with almost no power would
    otherwise get huge steps and drift slowly over repeated passes.
    """
    L = taps
    r = np.concatenate([np.zeros(L), filtered_reference(as_1d(x, "x"), plant.secondary)])
    state = {"P": None}

    def update(loop, b):
        lo = b * L
        seg = r[lo : lo + 2 * L]
        if len(seg) < 2 * L:
            seg = np.pad(seg, (0, 2 * L - len(seg)))
        R = np.fft.rfft(seg)
        E = np.fft.rfft(np.concatenate([np.zeros(L), loop.e[lo : lo + L]]))
        G = np.conj(R) * E
        if normalize:
            power = np.abs(R) ** 2
            P = power if state["P"] is None else forgetting * state["P"] + (1 - forgetting) * power
            state["P"] = P
            G = G / (P + regularization * P.mean() + 1e-12)
        loop.apply_gradient(np.fft.irfft(G, 2 * L), mu)

    return _block_run(x, plant, taps, mu, w0, disturbance, f"FD-FxNLMS({taps})", update)


def fd_felms_whitened_run(x, plant: PlantModel, taps: int, mu: float, *,
                          forgetting: float = 0.9, update_frames: int = 4,
                          regularization: float = 0.1, w0=None,
                          disturbance=None) -> RunReport:
    """Filtered-error frequency-domain LMS with reference whitening.

    The error is filtered by the time-reversed secondary path, which makes
    it available ``len(s) - 1`` samples late; the reference is delayed by the
    same amount. Gradients are whitened per bin by the running reference
    power and applied once every ``update_frames`` blocks. This is a
    single-channel stand-in for decoupled multichannel filtered-error schemes.
    """
    if update_frames < 1:
        raise ConfigError("update_frames must be >= 1")
    L = taps
    s = plant.secondary
    delay = len(s) - 1
    x_arr = as_1d(x, "x")
    xpad = np.concatenate([np.zeros(2 * L + delay), x_arr, np.zeros(L)])
    state = {"P": None, "acc": np.zeros(2 * L), "count": 0}

    def update(loop, b):
        end = (b + 1) * L - delay  # filtered error known for m < end
        lo = end - L
        if end <= 0:
            return
        m0 = max(lo, 0)
        seg_e = loop.e[m0 : end + delay]
        e_f = np.zeros(L)
        e_f[m0 - lo :] = np.correlate(seg_e, s, mode="valid")[: end - m0]
        # reference window x[lo - L, end) in padded coordinates
        off = 2 * L + delay
        X = np.fft.rfft(xpad[off + lo - L : off + end])
        power = np.abs(X) ** 2
        P = power if state["P"] is None else forgetting * state["P"] + (1 - forgetting) * power
        state["P"] = P
        Ef = np.fft.rfft(np.concatenate([np.zeros(L), e_f]))
        state["acc"] += np.fft.irfft(np.conj(X) * Ef / (P + regularization * P.mean() + 1e-12),
                                     2 * L)
        state["count"] += 1
        if state["count"] == update_frames:
            loop.apply_gradient(state["acc"], mu)
            state["acc"] = np.zeros(2 * L)
            state["count"] = 0

    return _block_run(x, plant, taps, mu, w0, disturbance,
                      f"FD-FeLMS-W({taps})", update)


def wiener_design(x, plant: PlantModel, taps: int, *, disturbance=None,
                  loading: float = 1e-8) -> np.ndarray:
    """Least-squares optimal causal control filter for a linear loudspeaker.

    Solves the Toeplitz normal equations ``(Rrr + eps I) w = -rrd`` by
    Levinson recursion, where ``r = s * x`` and ``d = p * x``. The
    correlations are taken over the full, untruncated convolutions, so the
    normal matrix is exactly Toeplitz and an exactly realizable canceller is
    recovered exactly. An explicit ``disturbance`` is used as given, zero
    beyond the record. ``eps = loading * Rrr[0]``.
    """
    x = as_1d(x, "x")
    if taps < 1:
        raise ConfigError("filter length must be >= 1")
    if len(x) < taps:
        raise ShapeError("record shorter than the filter")
    s = plant.secondary
    longest = max(len(s), len(plant.primary))
    nfft = 1 << int(np.ceil(np.log2(len(x) + longest + taps)))
    X = np.fft.rfft(x, nfft)
    R = X * np.fft.rfft(s, nfft)
    if disturbance is None:
        D = X * np.fft.rfft(plant.primary, nfft)
    else:
        d = as_1d(disturbance, "disturbance")
        if len(d) != len(x):
            raise ShapeError("disturbance and reference differ in length")
        D = np.fft.rfft(d, nfft)
    acf = np.fft.irfft(np.abs(R) ** 2, nfft)[:taps]
    xcf = np.fft.irfft(D * np.conj(R), nfft)[:taps]
    acf[0] += loading * acf[0]
    if acf[0] <= 0:
        raise NumericalError("filtered reference has zero energy")
    try:
        w = linalg.solve_toeplitz(acf, -xcf)
    except (linalg.LinAlgError, ValueError) as exc:
        cond = np.linalg.cond(linalg.toeplitz(acf[: min(taps, 512)]))
        raise NumericalError(f"Toeplitz solve failed (condition ~{cond:.3g}): {exc}") from exc
    if not np.all(np.isfinite(w)):
        raise NumericalError("Wiener solution is not finite")
    return w


def wiener_run(x, plant: PlantModel, taps: int, *, disturbance=None) -> RunReport:
    """Design on the record, then play the fixed filter through the nonlinear plant."""
    x = as_1d(x, "x")
    w = wiener_design(x, plant, taps, disturbance=disturbance)
    d = plant.disturbance(x) if disturbance is None else as_1d(disturbance, "disturbance")
    y = fast_convolve(x, w)
    e = d + plant.anti_noise(y)
    return RunReport(e, d, y, w, False, 0, f"Wiener({taps})")
