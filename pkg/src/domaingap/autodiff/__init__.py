"""Minimal reverse-mode automatic differentiation on float64 numpy arrays."""

from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import gradcheck, numerical_grad, relative_error
from .ops import (
    absolute,
    add,
    add_scalar,
    apply_activation,
    channel_bias,
    compute_loss,
    concat_batch,
    conv2d,
    cross_entropy,
    dropout,
    instance_norm,
    l1_loss,
    leaky_relu,
    mean,
    mse_loss,
    mul,
    neg,
    relu,
    reflect_pad,
    reshape,
    scale,
    sigmoid,
    softmax_channel,
    square,
    sub,
    tanh,
    total,
    upsample2x,
)
from .optim import PRESETS, AdamState, adam_step, zero_grad
from .tensor import Graph, Node, Tensor, backward, is_grad_enabled, no_grad

forward_conv2d = conv2d

__all__ = [
    "AdamState",
    "Graph",
    "Node",
    "PRESETS",
    "Tensor",
    "absolute",
    "adam_step",
    "add",
    "add_scalar",
    "apply_activation",
    "backward",
    "channel_bias",
    "compute_loss",
    "concat_batch",
    "conv2d",
    "cross_entropy",
    "dropout",
    "forward_conv2d",
    "gradcheck",
    "instance_norm",
    "is_grad_enabled",
    "l1_loss",
    "leaky_relu",
    "load_checkpoint",
    "mean",
    "mse_loss",
    "mul",
    "neg",
    "no_grad",
    "numerical_grad",
    "relative_error",
    "relu",
    "reflect_pad",
    "reshape",
    "save_checkpoint",
    "scale",
    "sigmoid",
    "softmax_channel",
    "square",
    "sub",
    "tanh",
    "total",
    "upsample2x",
    "zero_grad",
]
