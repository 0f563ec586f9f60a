"""Training objective through the loudspeaker and secondary path, Adam, and the loop."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..acoustics import PlantModel, sef, sef_prime
from ..core import ConfigError, NumericalError, ShapeError, as_1d
from ..dsp import a_weighting_fir, convolve, convolve_adjoint, nmse_db
from .model import ModelConfig, WaveNetVnnParams, forward_backward, init_params, model_forward

log = logging.getLogger(__name__)

LOSS_DELTA = 1e-12
_DB = 10 / math.log(10)


def anc_loss_and_grad(e, d, a_fir=None, sample_rate: float = 16000):
    """Mean of the NMSE and A-weighted power ratios (both in dB) and ``dloss/de``.

    ``LOSS_DELTA`` is added to every energy so the loss stays smooth at e = 0.
    """
    e = np.asarray(e, dtype=float)
    d = np.asarray(d, dtype=float)
    a = a_weighting_fir(sample_rate) if a_fir is None else a_fir
    ae, ad = convolve(e, a), convolve(d, a)
    pe, pd = e @ e + LOSS_DELTA, d @ d + LOSS_DELTA
    pae, pad = ae @ ae + LOSS_DELTA, ad @ ad + LOSS_DELTA
    loss = 0.5 * _DB * (math.log(pe / pd) + math.log(pae / pad))
    grad = _DB * (e / pe + convolve_adjoint(ae, a) / pae)
    return loss, grad


def anc_loss(e, d, a_fir=None, sample_rate: float = 16000) -> float:
    e, d = as_1d(e, "e"), as_1d(d, "d")
    if len(e) != len(d):
        raise ShapeError(f"length mismatch: {len(e)} vs {len(d)}")
    if not d @ d > 0:
        raise NumericalError("disturbance has zero energy")
    return anc_loss_and_grad(e, d, a_fir, sample_rate)[0]


def model_backward(x, plant: PlantModel, params: WaveNetVnnParams, *, disturbance=None,
                   a_fir=None):
    """Loss of the closed loop and its gradient for every parameter.

    The error is ``p * x + s * sef(model(x))``; the secondary path and the
    loudspeaker are fixed, so the gradient reaches the network through
    ``sef_prime`` and the adjoint of the secondary-path convolution.
    """
    x = as_1d(x, "x")
    d = plant.disturbance(x) if disturbance is None else np.asarray(disturbance, dtype=float)
    a = a_weighting_fir(plant.sample_rate) if a_fir is None else a_fir

    def output_grad(y):
        e = d + convolve(sef(y, plant.eta2), plant.secondary)
        loss, g_e = anc_loss_and_grad(e, d, a)
        return loss, sef_prime(y, plant.eta2) * convolve_adjoint(g_e, plant.secondary)

    loss, _, grads = forward_backward(x, params, output_grad)
    return loss, grads


@dataclass
class TrainState:
    first_moment: dict[str, np.ndarray]
    second_moment: dict[str, np.ndarray]
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epoch: int = 0

    @classmethod
    def for_params(cls, params: WaveNetVnnParams, **hyper) -> "TrainState":
        zeros = {k: np.zeros_like(v) for k, v in params.items()}
        return cls(zeros, {k: v.copy() for k, v in zeros.items()}, **hyper)


def adam_step(params: WaveNetVnnParams, grads: dict, state: TrainState):
    """Bias-corrected Adam update; returns new ``(params, state)`` objects."""
    b1, b2 = state.beta1, state.beta2
    step = state.step_count + 1
    m_new, v_new, tensors = {}, {}, {}
    for name, value in params.items():
        g = grads[name]
        if g.shape != value.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, expected {value.shape}")
        m = b1 * state.first_moment[name] + (1 - b1) * g
        v = b2 * state.second_moment[name] + (1 - b2) * g * g
        m_hat = m / (1 - b1**step)
        v_hat = v / (1 - b2**step)
        tensors[name] = value - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
        m_new[name], v_new[name] = m, v
    return params.replace(tensors), replace(state, first_moment=m_new, second_moment=v_new,
                                            step_count=step)


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    epochs: int = 30
    learning_rate: float = 1e-3
    lr_decay: float = 1.0
    """Learning rate is multiplied by this after every epoch."""
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 1
    crop: int | None = None
    """Train on a random window of this many samples per segment (None = whole segment)."""
    seed: int = 0
    checkpoint_dir: str | None = None
    time_budget: float | None = None
    """Stop after the epoch in which this many seconds have elapsed."""


@dataclass
class TrainResult:
    params: WaveNetVnnParams
    epoch_losses: list[float]
    state: TrainState


def train_model(dataset, plant: PlantModel, config: TrainConfig | None = None,
                params: WaveNetVnnParams | None = None, callback=None) -> TrainResult:
    """Epochs of shuffled per-segment Adam updates on the closed-loop loss.

    The gradient of a batch is the mean of its segments' gradients and the
    reported epoch loss is the mean segment loss. Everything random (init,
    shuffling, crops) is drawn from ``config.seed``. ``callback(epoch, params,
    loss)`` is called after every epoch.
    """
    config = config or TrainConfig()
    segments = [as_1d(s, "segment") for s in dataset]
    if not segments:
        raise ConfigError("training set is empty")
    if config.epochs < 1 or config.batch_size < 1:
        raise ConfigError("epochs and batch_size must be >= 1")
    rng = np.random.default_rng(config.seed)
    if params is None:
        params = init_params(config.model, seed=int(rng.integers(2**31)))
    state = TrainState.for_params(params, learning_rate=config.learning_rate,
                                  beta1=config.beta1, beta2=config.beta2,
                                  epsilon=config.epsilon)
    a = a_weighting_fir(plant.sample_rate)
    losses = []
    started = time.perf_counter()
    for epoch in range(config.epochs):
        order = rng.permutation(len(segments))
        epoch_loss = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            total = None
            for idx in batch:
                x = segments[idx]
                if config.crop is not None and config.crop < len(x):
                    off = int(rng.integers(len(x) - config.crop + 1))
                    x = x[off : off + config.crop]
                loss, grads = model_backward(x, plant, params, a_fir=a)
                epoch_loss.append(loss)
                if total is None:
                    total = grads
                else:
                    for k in total:
                        total[k] += grads[k]
            mean = {k: v / len(batch) for k, v in total.items()}
            params, state = adam_step(params, mean, state)
        state = replace(state, epoch=epoch + 1,
                        learning_rate=state.learning_rate * config.lr_decay)
        losses.append(float(np.mean(epoch_loss)))
        log.info("epoch %d loss %.3f dB", epoch + 1, losses[-1])
        if callback is not None:
            callback(epoch + 1, params, losses[-1])
        if config.checkpoint_dir is not None:
            from .checkpoint import save_checkpoint

            path = Path(config.checkpoint_dir) / f"epoch{epoch + 1:03d}.wvnn"
            path.parent.mkdir(parents=True, exist_ok=True)
            save_checkpoint(params, path)
        if config.time_budget is not None and time.perf_counter() - started > config.time_budget:
            break
    return TrainResult(params, losses, state)


def evaluate_controller(x, plant: PlantModel, params: WaveNetVnnParams,
                        disturbance=None) -> tuple[np.ndarray, np.ndarray]:
    """Error and disturbance with the trained controller in the loop."""
    x = as_1d(x, "x")
    d = plant.disturbance(x) if disturbance is None else np.asarray(disturbance, dtype=float)
    y = model_forward(x, params)
    return d + plant.anti_noise(y), d


def controller_nmse(x, plant: PlantModel, params: WaveNetVnnParams) -> float:
    e, d = evaluate_controller(x, plant, params)
    return nmse_db(e, d)
