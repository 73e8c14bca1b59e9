"""Define-by-run reverse-mode differentiation.

Every operation that touches a tensor with ``requires_grad=True`` records a
:class:`Node` on its output.  :func:`backward` walks those nodes in reverse
topological order.  The graph is rebuilt on each forward pass, which keeps the
alternating generator/discriminator updates of the translator simple.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from ..exceptions import ShapeError

_ids = itertools.count()
_state = threading.local()  # per thread, so parallel training jobs stay independent


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block (inference, metric passes)."""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@dataclass(eq=False)
class Node:
    """One recorded operation: op kind, its inputs, and the vector-Jacobian rule.

    ``backward_fn`` receives the upstream gradient of the output and returns one
    gradient (or ``None``) per input.  Forward context needed by the rule is
    captured in its closure.
    """

    kind: str
    inputs: tuple["Tensor", ...]
    backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tensor:
    """An n-dimensional float64 array that can participate in a graph."""

    __slots__ = ("data", "requires_grad", "node_id", "name", "_grad", "_node")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.node_id = next(_ids)
        self.name = name
        self._grad: np.ndarray | None = None
        self._node: Node | None = None

    # -- basic accessors -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def values(self) -> np.ndarray:
        """Row-major flat view of the values."""
        return self.data.reshape(-1)

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            return np.zeros_like(self.data)
        return self._grad

    @grad.setter
    def grad(self, value) -> None:
        if value is None:
            self._grad = None
            return
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self.data.shape:
            raise ShapeError(f"grad shape {value.shape} != tensor shape {self.data.shape}")
        self._grad = value

    @property
    def op(self) -> str | None:
        return None if self._node is None else self._node.kind

    def zero_grad(self) -> None:
        self._grad = None

    def detach(self) -> "Tensor":
        """Same values, no graph history and no gradient tracking."""
        return Tensor(self.data, requires_grad=False)

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag}, op={self.op})"

    # -- operator sugar; the rules live in ops.py ---------------------------
    def __add__(self, other):
        from . import ops

        if isinstance(other, Tensor):
            return ops.add(self, other)
        return ops.add_scalar(self, float(other))

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops

        if isinstance(other, Tensor):
            return ops.sub(self, other)
        return ops.add_scalar(self, -float(other))

    def __rsub__(self, other):
        from . import ops

        return ops.add_scalar(ops.neg(self), float(other))

    def __mul__(self, other):
        from . import ops

        if isinstance(other, Tensor):
            return ops.mul(self, other)
        return ops.scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops

        return ops.neg(self)


def make_result(
    data: np.ndarray,
    inputs: Sequence[Tensor],
    kind: str,
    backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]],
) -> Tensor:
    """Wrap an op's forward output, recording the node only when needed."""
    track = is_grad_enabled() and any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = track
    out.node_id = next(_ids)
    out.name = None
    out._grad = None
    out._node = Node(kind, tuple(inputs), backward_fn) if track else None
    return out


@dataclass
class GraphRecord:
    kind: str | None
    input_ids: tuple[int, ...]
    output_id: int


@dataclass
class Graph:
    """Topologically ordered view of the tensors reachable from a root.

    Leaves appear with ``kind=None``.  Every input id precedes the record that
    consumes it.
    """

    tensors: list[Tensor] = field(default_factory=list)

    @classmethod
    def from_root(cls, root: Tensor) -> "Graph":
        order: list[Tensor] = []
        state: dict[int, int] = {}  # 1 = on stack, 2 = finished
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            t, expanded = stack.pop()
            if expanded:
                state[t.node_id] = 2
                order.append(t)
                continue
            mark = state.get(t.node_id)
            if mark == 2:
                continue
            if mark == 1:
                raise RuntimeError("cycle detected in differentiation graph")
            state[t.node_id] = 1
            stack.append((t, True))
            if t._node is not None:
                for parent in reversed(t._node.inputs):
                    if not parent.requires_grad:
                        continue
                    pmark = state.get(parent.node_id)
                    if pmark == 1:
                        raise RuntimeError("cycle detected in differentiation graph")
                    if pmark is None:
                        stack.append((parent, False))
        return cls(order)

    @property
    def nodes(self) -> list[GraphRecord]:
        return [
            GraphRecord(
                t.op,
                tuple(p.node_id for p in t._node.inputs) if t._node else (),
                t.node_id,
            )
            for t in self.tensors
        ]

    def __len__(self) -> int:
        return len(self.tensors)


def backward(loss: Tensor, graph: Graph | None = None) -> None:
    """Accumulate d(loss)/d(t) into ``t.grad`` for every tracked tensor ``t``.

    Gradients add onto whatever is already stored; call ``zero_grad`` first
    for a fresh evaluation.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("loss does not depend on any tensor with requires_grad=True")
    if graph is None:
        graph = Graph.from_root(loss)

    pending: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
    for t in reversed(graph.tensors):
        g = pending.pop(t.node_id, None)
        if g is None:
            continue
        # never in-place: rules may hand the same array to several inputs
        t._grad = g if t._grad is None else t._grad + g
        if t._node is None:
            continue
        for parent, pg in zip(t._node.inputs, t._node.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            prev = pending.get(parent.node_id)
            pending[parent.node_id] = pg if prev is None else prev + pg
