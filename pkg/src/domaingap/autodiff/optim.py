"""ADAM with bias-corrected moment estimates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import ShapeError
from .tensor import Tensor

# Two configurations are in use: the translator runs with a low momentum term,
# the segmentation network with the usual defaults.
PRESETS = {
    "translator": dict(lr=0.0002, beta1=0.5, beta2=0.999, epsilon=1e-8),
    "segnet": dict(lr=0.001, beta1=0.9, beta2=0.999, epsilon=1e-8),
}


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def preset(cls, name: str, **overrides) -> "AdamState":
        try:
            params = dict(PRESETS[name])
        except KeyError:
            raise ValueError(f"unknown ADAM preset {name!r}; choose from {sorted(PRESETS)}") from None
        params.update(overrides)
        return cls(**params)

    def init_for(self, params: list[Tensor]) -> "AdamState":
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.step_count = 0
        return self


def adam_step(params: list[Tensor], state: AdamState) -> None:
    """Apply one ADAM update in place.  Gradients are left for the caller to zero."""
    if not state.m:
        state.init_for(params)
    if len(state.m) != len(params):
        raise ShapeError(f"optimizer tracks {len(state.m)} tensors, got {len(params)}")
    for p, m, v in zip(params, state.m, state.v):
        if m.shape != p.shape or v.shape != p.shape:
            raise ShapeError(f"moment shape {m.shape} does not match parameter {p.shape}")

    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.epsilon)


def zero_grad(params: list[Tensor]) -> None:
    for p in params:
        p.zero_grad()
