"""Convolution layers and the parameter bookkeeping shared by both networks."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass
class LayerInfo:
    name: str
    kind: str
    shape: tuple[int, ...]
    n_params: int


class Conv:
    """2-d convolution with optional per-channel bias.

    ``init="normal"`` draws weights from N(0, 0.02); ``init="he_uniform"`` from
    U(-sqrt(6 / fan_in), +sqrt(6 / fan_in)).  Biases start at zero.
    ``pad_mode`` is ``"zero"`` or ``"reflect"``.
    """

    def __init__(self, name, cin, cout, k, rng, stride=1, padding=0, bias=True, init="normal", pad_mode="zero"):
        if pad_mode not in ("zero", "reflect"):
            raise ValueError(f"unknown pad_mode {pad_mode!r}")
        self.name = name
        self.stride = stride
        self.padding = padding
        self.pad_mode = pad_mode
        shape = (cout, cin, k, k)
        if init == "normal":
            w = rng.normal(0.0, 0.02, size=shape)
        elif init == "he_uniform":
            bound = math.sqrt(6.0 / (cin * k * k))
            w = rng.uniform(-bound, bound, size=shape)
        else:
            raise ValueError(f"unknown init {init!r}")
        self.weight = Tensor(w, requires_grad=True, name=f"{name}.weight")
        self.bias = Tensor(np.zeros(cout), requires_grad=True, name=f"{name}.bias") if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        if self.pad_mode == "reflect" and self.padding:
            y = ad.conv2d(ad.reflect_pad(x, self.padding), self.weight, self.stride, 0)
        else:
            y = ad.conv2d(x, self.weight, self.stride, self.padding)
        if self.bias is not None:
            y = ad.channel_bias(y, self.bias)
        return y

    def parameters(self) -> list[Tensor]:
        return [self.weight] if self.bias is None else [self.weight, self.bias]


class Network:
    """Base class: subclasses register their convolutions in ``self.convs``."""

    convs: list[Conv]

    def parameters(self) -> list[Tensor]:
        return [p for conv in self.convs for p in conv.parameters()]

    def named_parameters(self) -> dict[str, Tensor]:
        return {p.name: p for p in self.parameters()}

    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def summary(self) -> list[LayerInfo]:
        rows = []
        for conv in self.convs:
            k = conv.weight.shape
            n = conv.weight.size + (0 if conv.bias is None else conv.bias.size)
            kind = f"conv{k[2]}x{k[3]}/s{conv.stride}" + ("+bias" if conv.bias is not None else "")
            rows.append(LayerInfo(conv.name, kind, k, n))
        return rows

    def summary_text(self) -> str:
        lines = [f"{'layer':<16}{'kind':<20}{'kernel':<20}{'params':>10}"]
        for row in self.summary():
            lines.append(f"{row.name:<16}{row.kind:<20}{str(row.shape):<20}{row.n_params:>10}")
        lines.append(f"{'total':<56}{self.n_params():>10}")
        return "\n".join(lines)

    def state_dict(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {prefix + name: p.data.copy() for name, p in self.named_parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray], prefix: str = "") -> None:
        for name, p in self.named_parameters().items():
            arr = np.asarray(state[prefix + name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"{prefix + name}: stored shape {arr.shape} != {p.shape}")
            p.data = arr.copy()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def digest(self) -> str:
        """SHA-256 over all parameter bytes (used to assert parameters did not move)."""
        h = hashlib.sha256()
        for p in self.parameters():
            h.update(p.data.tobytes())
        return h.hexdigest()
