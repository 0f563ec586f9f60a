"""Causal WaveNet-Volterra ANC controller."""
from .checkpoint import dump_csv, load_checkpoint, save_checkpoint
from .model import (
    ModelConfig,
    WaveNetVnnParams,
    causal_dilated_conv,
    forward_backward,
    gated_residual_block,
    init_params,
    model_forward,
    parameter_shapes,
    vnn_quadratic_unit,
    zero_params,
)
from .train import (
    TrainConfig,
    TrainResult,
    TrainState,
    adam_step,
    anc_loss,
    anc_loss_and_grad,
    controller_nmse,
    evaluate_controller,
    model_backward,
    train_model,
)

__all__ = [
    "ModelConfig", "WaveNetVnnParams", "causal_dilated_conv", "forward_backward",
    "gated_residual_block", "init_params", "model_forward", "parameter_shapes",
    "vnn_quadratic_unit", "zero_params", "TrainConfig", "TrainResult", "TrainState",
    "adam_step", "anc_loss", "anc_loss_and_grad", "controller_nmse", "evaluate_controller",
    "model_backward", "train_model", "save_checkpoint", "load_checkpoint", "dump_csv",
]
