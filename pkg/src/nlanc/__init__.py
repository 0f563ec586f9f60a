"""Nonlinear active noise control: a causal WaveNet-Volterra controller and
classical adaptive baselines over an image-method room plant."""

__version__ = "0.1.0"
