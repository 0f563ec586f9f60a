"""Shared signal container and exception hierarchy."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class AncError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(AncError, ValueError):
    pass


class DomainError(AncError, ValueError):
    pass


class DegenerateGeometryError(DomainError):
    pass


class ConfigError(AncError, ValueError):
    pass


class FormatError(AncError, ValueError):
    pass


class NumericalError(AncError, ArithmeticError):
    pass


@dataclass(frozen=True)
class Signal:
    """A mono waveform with its sample rate.

    ``np.asarray(signal)`` yields the samples, so a Signal can be passed
    anywhere an array is expected.
    """

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1:
            raise ShapeError(f"signal must be 1-D, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise DomainError("signal contains non-finite samples")
        if self.sample_rate <= 0:
            raise DomainError("sample_rate must be positive")
        object.__setattr__(self, "samples", samples)

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.samples
        return self.samples.astype(dtype)

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def as_1d(x, name: str = "signal") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ShapeError(f"{name} is empty")
    return arr
