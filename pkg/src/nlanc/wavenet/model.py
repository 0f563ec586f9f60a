"""Causal WaveNet-Volterra controller: parameters, forward pass and gradients.

Signal flow (every convolution causal, all sequences keep their length)::

    x -> input conv -> [gated residual block] x N --skip sum--> tanh
      -> conv -> tanh -> conv -> tanh -> conv -> tanh
      -> first-order conv + sum_q (a_q * h) (b_q * h) -> y

Activations are ``(channels, time)`` arrays. Kernels are
``(out_channels, in_channels, taps)``; tap ``k`` multiplies the input
``k * dilation`` samples in the past.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..core import ConfigError, NumericalError, ShapeError


@dataclass(frozen=True)
class ModelConfig:
    channels: int = 16
    skip_channels: int = 16
    stacks: int = 3
    layers_per_stack: int = 10
    kernel_size: int = 2
    input_kernel: int = 1
    post_kernel: int = 1
    vnn_kernel: int = 1
    vnn_units: int = 4

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value < 1:
                raise ConfigError(f"{name} must be >= 1")

    @property
    def dilations(self) -> list[int]:
        return [2**i for i in range(self.layers_per_stack)] * self.stacks

    @property
    def receptive_field(self) -> int:
        """Number of input samples (current one included) that can reach an output."""
        span = (self.input_kernel - 1) + 3 * (self.post_kernel - 1) + (self.vnn_kernel - 1)
        span += sum((self.kernel_size - 1) * d for d in self.dilations)
        return span + 1

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class WaveNetVnnParams:
    config: ModelConfig
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name):
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors)

    def items(self):
        return self.tensors.items()

    def copy(self) -> "WaveNetVnnParams":
        return WaveNetVnnParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def replace(self, tensors: dict[str, np.ndarray]) -> "WaveNetVnnParams":
        return WaveNetVnnParams(self.config, tensors)

    @property
    def size(self) -> int:
        return sum(v.size for v in self.tensors.values())


def parameter_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    C, S, K = cfg.channels, cfg.skip_channels, cfg.kernel_size
    shapes = {"input.w": (C, 1, cfg.input_kernel), "input.b": (C,)}
    for i in range(len(cfg.dilations)):
        p = f"layer{i}"
        shapes |= {
            f"{p}.filter.w": (C, C, K), f"{p}.filter.b": (C,),
            f"{p}.gate.w": (C, C, K), f"{p}.gate.b": (C,),
            f"{p}.residual.w": (C, C), f"{p}.residual.b": (C,),
            f"{p}.skip.w": (S, C), f"{p}.skip.b": (S,),
        }
    for j in range(3):
        shapes |= {f"post{j}.w": (S, S, cfg.post_kernel), f"post{j}.b": (S,)}
    shapes |= {"vnn.linear.w": (1, S, cfg.vnn_kernel), "vnn.linear.b": (1,)}
    for q in range(cfg.vnn_units):
        shapes |= {f"vnn.quad{q}.ka": (S, cfg.vnn_kernel), f"vnn.quad{q}.kb": (S, cfg.vnn_kernel)}
    return shapes


def init_params(cfg: ModelConfig, seed: int = 0) -> WaveNetVnnParams:
    """Uniform fan-in initialization with a silent output stage.

    The VNN first-order kernel, its bias and every quadratic ``ka`` factor
    start at zero so the untrained controller emits exactly nothing. The
    ``kb`` factors stay random: with both factors at zero the quadratic terms
    would never receive a gradient.
    """
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in parameter_shapes(cfg).items():
        silent = name.startswith("vnn.linear") or name.endswith(".ka")
        if name.endswith(".b") or silent:
            tensors[name] = np.zeros(shape)
            continue
        fan_in = int(np.prod(shape[1:]))
        bound = 1.0 / np.sqrt(fan_in)
        tensors[name] = rng.uniform(-bound, bound, size=shape)
    return WaveNetVnnParams(cfg, tensors)


def zero_params(cfg: ModelConfig) -> WaveNetVnnParams:
    return WaveNetVnnParams(cfg, {k: np.zeros(s) for k, s in parameter_shapes(cfg).items()})


def causal_dilated_conv(x, kernel, dilation: int = 1, bias=None) -> np.ndarray:
    """``out[:, n] = sum_k kernel[:, :, k] @ x[:, n - k * dilation]`` with zero history.

    ``x`` may be 1-D (one channel); ``kernel`` may be 1-D (single in/out channel).
    """
    if dilation < 1:
        raise ConfigError("dilation must be >= 1")
    x = np.asarray(x, dtype=float)
    kernel = np.asarray(kernel, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None]
    if kernel.ndim == 1:
        kernel = kernel[None, None]
    if kernel.shape[1] != x.shape[0]:
        raise ShapeError(f"kernel expects {kernel.shape[1]} channels, got {x.shape[0]}")
    out = _conv(x, kernel, None if bias is None else np.asarray(bias, dtype=float), dilation)
    return out[0] if squeeze and out.shape[0] == 1 else out


def _conv(x, w, b, dilation):
    T = x.shape[1]
    out = w[:, :, 0] @ x
    for k in range(1, w.shape[2]):
        s = k * dilation
        if s < T:
            out[:, s:] += w[:, :, k] @ x[:, : T - s]
    if b is not None:
        out += b[:, None]
    return out


def _conv_backward(g, x, w, dilation, need_input=True):
    T = x.shape[1]
    gw = np.zeros_like(w)
    gw[:, :, 0] = g @ x.T
    gx = w[:, :, 0].T @ g if need_input else None
    for k in range(1, w.shape[2]):
        s = k * dilation
        if s < T:
            gw[:, :, k] = g[:, s:] @ x[:, : T - s].T
            if need_input:
                gx[:, : T - s] += w[:, :, k].T @ g[:, s:]
    return gw, g.sum(axis=1), gx


def _sigmoid(v):
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def gated_residual_block(x, params: WaveNetVnnParams, index: int):
    """One residual layer: returns ``(residual_out, skip_out)``.

    ``z = tanh(W_f * x) * sigmoid(W_g * x)``, ``residual_out = x + W_r z``,
    ``skip_out = W_s z``.
    """
    cfg = params.config
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] != cfg.channels:
        raise ShapeError(f"expected ({cfg.channels}, T) input, got {x.shape}")
    p = f"layer{index}"
    res, skip, _ = _block_forward(x, params.tensors, p, cfg.dilations[index])
    return res, skip


def _block_forward(h, t, p, dilation):
    ta = np.tanh(_conv(h, t[f"{p}.filter.w"], t[f"{p}.filter.b"], dilation))
    sg = _sigmoid(_conv(h, t[f"{p}.gate.w"], t[f"{p}.gate.b"], dilation))
    z = ta * sg
    res = h + t[f"{p}.residual.w"] @ z + t[f"{p}.residual.b"][:, None]
    skip = t[f"{p}.skip.w"] @ z + t[f"{p}.skip.b"][:, None]
    return res, skip, (ta, sg)


def vnn_quadratic_unit(x, a, b) -> np.ndarray:
    """Rank-1 second-order Volterra term ``(a * x)(n) * (b * x)(n)``.

    ``x`` is ``(channels, T)`` or 1-D; ``a`` and ``b`` are ``(channels, taps)``
    or 1-D causal kernels.
    """
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ShapeError("quadratic kernels must be non-empty")
    if x.ndim == 1:
        x = x[None]
    a = a.reshape(x.shape[0], -1)
    b = b.reshape(x.shape[0], -1)
    return (_conv(x, a[None], None, 1) * _conv(x, b[None], None, 1))[0]


def model_forward(x, params: WaveNetVnnParams, *, _cache: dict | None = None) -> np.ndarray:
    """Control signal for reference ``x``; same length, strictly causal."""
    cfg = params.config
    t = params.tensors
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ShapeError("reference must be 1-D")
    h = _conv(x[None], t["input.w"], t["input.b"], 1)
    skip_sum = np.zeros((cfg.skip_channels, len(x)))
    layers = []
    for i, dilation in enumerate(cfg.dilations):
        h_next, skip, gates = _block_forward(h, t, f"layer{i}", dilation)
        if not np.all(np.isfinite(h_next)):
            raise NumericalError(f"non-finite activation in residual layer {i}")
        layers.append((h, gates))
        skip_sum += skip
        h = h_next
    acts = [np.tanh(skip_sum)]
    for j in range(3):
        acts.append(np.tanh(_conv(acts[-1], t[f"post{j}.w"], t[f"post{j}.b"], 1)))
    top = acts[-1]
    y = _conv(top, t["vnn.linear.w"], t["vnn.linear.b"], 1)[0]
    quads = []
    for q in range(cfg.vnn_units):
        pa = _conv(top, t[f"vnn.quad{q}.ka"][None], None, 1)[0]
        pb = _conv(top, t[f"vnn.quad{q}.kb"][None], None, 1)[0]
        quads.append((pa, pb))
        y = y + pa * pb
    if not np.all(np.isfinite(y)):
        raise NumericalError("non-finite controller output")
    if _cache is not None:
        _cache.update(x=x, layers=layers, acts=acts, quads=quads)
    return y


def forward_backward(x, params: WaveNetVnnParams, output_grad_fn):
    """Run the network, get ``dL/dy`` from ``output_grad_fn(y)`` and backpropagate.

    ``output_grad_fn`` returns ``(loss, dL/dy)``. Returns ``(loss, y, grads)``.
    """
    cfg = params.config
    t = params.tensors
    cache: dict = {}
    y = model_forward(x, params, _cache=cache)
    loss, gy = output_grad_fn(y)
    gy = np.asarray(gy, dtype=float)
    grads = {}
    acts = cache["acts"]
    top = acts[-1]
    g_out = gy[None]
    grads["vnn.linear.w"], grads["vnn.linear.b"], g_top = _conv_backward(
        g_out, top, t["vnn.linear.w"], 1)
    for q, (pa, pb) in enumerate(cache["quads"]):
        ga, _, gxa = _conv_backward((gy * pb)[None], top, t[f"vnn.quad{q}.ka"][None], 1)
        gb, _, gxb = _conv_backward((gy * pa)[None], top, t[f"vnn.quad{q}.kb"][None], 1)
        grads[f"vnn.quad{q}.ka"], grads[f"vnn.quad{q}.kb"] = ga[0], gb[0]
        g_top += gxa + gxb
    g = g_top
    for j in (2, 1, 0):
        g_pre = g * (1 - acts[j + 1] ** 2)
        grads[f"post{j}.w"], grads[f"post{j}.b"], g = _conv_backward(
            g_pre, acts[j], t[f"post{j}.w"], 1)
    g_skip = g * (1 - acts[0] ** 2)

    g_h = np.zeros((cfg.channels, len(y)))
    for i in reversed(range(len(cfg.dilations))):
        p = f"layer{i}"
        h_in, (ta, sg) = cache["layers"][i]
        z = ta * sg
        grads[f"{p}.residual.w"] = g_h @ z.T
        grads[f"{p}.residual.b"] = g_h.sum(axis=1)
        grads[f"{p}.skip.w"] = g_skip @ z.T
        grads[f"{p}.skip.b"] = g_skip.sum(axis=1)
        g_z = t[f"{p}.residual.w"].T @ g_h + t[f"{p}.skip.w"].T @ g_skip
        g_a = g_z * sg * (1 - ta**2)
        g_b = g_z * ta * sg * (1 - sg)
        dilation = cfg.dilations[i]
        grads[f"{p}.filter.w"], grads[f"{p}.filter.b"], gx_f = _conv_backward(
            g_a, h_in, t[f"{p}.filter.w"], dilation)
        grads[f"{p}.gate.w"], grads[f"{p}.gate.b"], gx_g = _conv_backward(
            g_b, h_in, t[f"{p}.gate.w"], dilation)
        g_h = g_h + gx_f + gx_g
    grads["input.w"], grads["input.b"], _ = _conv_backward(
        g_h, cache["x"][None], t["input.w"], 1, need_input=False)

    for name, value in grads.items():
        if not np.all(np.isfinite(value)):
            raise NumericalError(f"non-finite gradient for {name}")
    return loss, y, {name: grads[name] for name in t}
