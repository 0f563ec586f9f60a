"""Image-method room responses, the SEF loudspeaker model and the ANC plant.

The plant is the feedforward loop

    e(n) = (p * x)(n) + (s * f(y))(n)

with ``p`` the primary path, ``s`` the secondary path and ``f`` the scaled
error function applied sample by sample to the control signal before it
leaves the loudspeaker.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .core import DegenerateGeometryError, DomainError, ShapeError, as_1d
from .dsp import convolve, direct_convolve

LINEAR = math.inf
"""Nonlinearity strength meaning "no loudspeaker saturation"."""

_SINC_HALF_WIDTH = 20  # fractional-delay interpolator spans 41 taps


def _check_eta2(eta2: float) -> None:
    if not (eta2 > 0):  # also rejects NaN
        raise DomainError(f"eta2 must be positive or inf, got {eta2}")


def sef(y, eta2: float = LINEAR):
    """Scaled error function ``integral_0^y exp(-t^2 / (2 eta2)) dt``.

    Evaluated in closed form as ``sqrt(eta2 pi / 2) erf(y / sqrt(2 eta2))``.
    With ``eta2 = inf`` the identity is returned unchanged.
    """
    _check_eta2(eta2)
    if math.isinf(eta2):
        return y
    eta = math.sqrt(eta2)
    return math.sqrt(math.pi / 2) * eta * erf(np.divide(y, math.sqrt(2) * eta))


def sef_prime(y, eta2: float = LINEAR):
    """Derivative of :func:`sef`, ``exp(-y^2 / (2 eta2))``."""
    _check_eta2(eta2)
    if math.isinf(eta2):
        return np.ones_like(y, dtype=float) if np.ndim(y) else 1.0
    return np.exp(-np.square(y) / (2 * eta2))


def sef_limit(eta2: float) -> float:
    """Saturation level of the loudspeaker, ``sqrt(eta2 pi / 2)``."""
    _check_eta2(eta2)
    return math.sqrt(eta2 * math.pi / 2)


@dataclass(frozen=True)
class RoomSpec:
    """Shoebox room with one source and one receiver.

    ``reflection`` overrides the Sabine-derived wall reflection coefficient
    (0 gives a free field). With ``fractional_delay=False`` every image is
    rounded to the nearest sample instead of band-limited interpolation.
    """

    dimensions: tuple[float, float, float]
    source_position: tuple[float, float, float]
    mic_position: tuple[float, float, float]
    t60: float = 0.2
    sample_rate: float = 16000
    rir_length: int = 512
    speed_of_sound: float = 343.0
    reflection: float | None = None
    fractional_delay: bool = True

    def __post_init__(self):
        dims = np.asarray(self.dimensions, dtype=float)
        if dims.shape != (3,) or np.any(dims <= 0):
            raise DomainError("room dimensions must be three positive lengths")
        for name in ("source_position", "mic_position"):
            pos = np.asarray(getattr(self, name), dtype=float)
            if pos.shape != (3,) or np.any(pos <= 0) or np.any(pos >= dims):
                raise DomainError(f"{name} {tuple(pos)} is not strictly inside the room")
        if self.t60 <= 0 or self.rir_length <= 0 or self.sample_rate <= 0:
            raise DomainError("t60, rir_length and sample_rate must be positive")
        if self.reflection is not None and not 0 <= self.reflection < 1:
            raise DomainError("reflection coefficient must lie in [0, 1)")

    @property
    def distance(self) -> float:
        return float(np.linalg.norm(np.subtract(self.source_position, self.mic_position)))


def sabine_reflection(room: RoomSpec) -> float:
    """Uniform wall reflection coefficient giving ``room.t60`` by Sabine's formula."""
    lx, ly, lz = room.dimensions
    volume = lx * ly * lz
    surface = 2 * (lx * ly + ly * lz + lx * lz)
    alpha = 24 * math.log(10) * volume / (room.speed_of_sound * surface * room.t60)
    if alpha >= 1:
        raise DomainError(f"t60 = {room.t60} s is too short for this room")
    return math.sqrt(1 - alpha)


def simulate_rir(room: RoomSpec) -> np.ndarray:
    """Room impulse response by the Allen-Berkley image method.

    Each image contributes ``beta**order / (4 pi d)`` at delay ``d / c``
    seconds. Images are enumerated up to the distance sound travels within
    the response length, so nothing beyond ``rir_length`` is dropped.
    """
    if room.distance == 0:
        raise DegenerateGeometryError("source and microphone coincide")
    beta = sabine_reflection(room) if room.reflection is None else room.reflection
    dims = np.asarray(room.dimensions, dtype=float)
    src = np.asarray(room.source_position, dtype=float)
    mic = np.asarray(room.mic_position, dtype=float)
    fs, n, c = room.sample_rate, room.rir_length, room.speed_of_sound
    half = _SINC_HALF_WIDTH if room.fractional_delay else 0

    max_dist = c * (n + half) / fs
    orders = np.ceil(max_dist / (2 * dims)).astype(int) + 1
    lattice = np.stack(
        np.meshgrid(*(np.arange(-k, k + 1) for k in orders), indexing="ij"), -1
    ).reshape(-1, 1, 3)
    parity = np.array(list(itertools.product((0, 1), repeat=3))).reshape(1, 8, 3)
    images = (1 - 2 * parity) * src + 2 * lattice * dims
    dist = np.linalg.norm(images - mic, axis=-1).ravel()
    reflections = (np.abs(lattice - parity) + np.abs(lattice)).sum(-1).ravel()
    delay = dist / c * fs
    keep = delay < n + half
    delay, dist, reflections = delay[keep], dist[keep], reflections[keep]
    with np.errstate(divide="ignore"):
        amp = np.power(beta, reflections) / (4 * np.pi * dist)

    h = np.zeros(n)
    if not room.fractional_delay:
        idx = np.rint(delay).astype(int)
        ok = idx < n
        np.add.at(h, idx[ok], amp[ok])
        return h
    taps = np.floor(delay).astype(int)[:, None] + np.arange(-half, half + 1)
    offset = taps - delay[:, None]
    kernel = 0.5 * (1 + np.cos(np.pi * offset / (half + 1))) * np.sinc(offset)
    ok = (taps >= 0) & (taps < n)
    np.add.at(h, taps[ok], (amp[:, None] * kernel)[ok])
    return h


def schroeder_curve(h) -> np.ndarray:
    """Backward-integrated energy decay curve in dB, 0 dB at the first sample."""
    h = as_1d(h, "h")
    energy = np.cumsum(h[::-1] ** 2)[::-1]
    with np.errstate(divide="ignore"):
        return 10 * np.log10(energy / energy[0])


@dataclass(frozen=True)
class Geometry:
    """Room layout of the benchmark.

    The reference microphone doubles as the noise-source position: the
    primary path runs from it to the error microphone, the secondary path
    from the control loudspeaker to the error microphone.
    """

    dimensions: tuple[float, float, float] = (3.0, 4.0, 2.0)
    reference_mic: tuple[float, float, float] = (1.5, 1.0, 1.0)
    error_mic: tuple[float, float, float] = (1.5, 3.0, 1.0)
    control_source: tuple[float, float, float] = (1.5, 2.5, 1.0)
    t60: float = 0.2
    sample_rate: float = 16000
    path_length: int = 512

    def room(self, source, mic) -> RoomSpec:
        return RoomSpec(self.dimensions, tuple(source), tuple(mic), t60=self.t60,
                        sample_rate=self.sample_rate, rir_length=self.path_length)


@dataclass(frozen=True)
class PlantModel:
    primary: np.ndarray
    secondary: np.ndarray
    eta2: float = LINEAR
    sample_rate: float = 16000
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        _check_eta2(self.eta2)
        for name in ("primary", "secondary"):
            taps = as_1d(getattr(self, name), name)
            if not np.all(np.isfinite(taps)):
                raise DomainError(f"{name} path has non-finite taps")
            object.__setattr__(self, name, taps)

    def with_eta2(self, eta2: float) -> "PlantModel":
        return PlantModel(self.primary, self.secondary, eta2, self.sample_rate, self.meta)

    def disturbance(self, x) -> np.ndarray:
        return convolve(x, self.primary)

    def anti_noise(self, y) -> np.ndarray:
        return convolve(sef(np.asarray(y, dtype=float), self.eta2), self.secondary)


def build_plant(eta2: float = LINEAR, geometry: Geometry | None = None) -> PlantModel:
    """Primary and secondary paths of the benchmark room.

    The primary path is peak-normalized to 1 and the secondary path is scaled
    by the same factor, preserving their relative level.
    """
    geometry = geometry or Geometry()
    p = simulate_rir(geometry.room(geometry.reference_mic, geometry.error_mic))
    s = simulate_rir(geometry.room(geometry.control_source, geometry.error_mic))
    scale = 1.0 / np.max(np.abs(p))
    return PlantModel(p * scale, s * scale, eta2, geometry.sample_rate,
                      {"path_scale": scale})


def plant_error(x, y, plant: PlantModel) -> np.ndarray:
    """Residual at the error microphone, ``p * x + s * sef(y)``.

    Direct (non-FFT) convolution keeps every output sample bit-identical
    when later inputs change.
    """
    for sig in (x, y):
        if getattr(sig, "sample_rate", plant.sample_rate) != plant.sample_rate:
            raise ShapeError("sample rate does not match the plant")
    x = as_1d(x, "x")
    y = as_1d(y, "y")
    if len(x) != len(y):
        raise ShapeError(f"x and y differ in length: {len(x)} vs {len(y)}")
    return direct_convolve(x, plant.primary) + direct_convolve(sef(y, plant.eta2), plant.secondary)


def write_rir_csv(h, path) -> None:
    """One tap per line."""
    with open(path, "w", newline="") as fh:
        for tap in as_1d(h, "h"):
            fh.write(f"{float(tap)!r}\n")


def read_rir_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        taps = [float(row[0]) for row in csv.reader(fh) if row]
    return as_1d(taps, "rir")
