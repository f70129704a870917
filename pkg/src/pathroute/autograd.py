"""Tape-based reverse-mode automatic differentiation over numpy arrays.

Every forward pass builds a fresh graph: each ``Tensor`` produced by an
operation remembers its parents and a closure that maps the output
gradient to parent gradients.  ``backward()`` on a scalar loss walks the
graph once in reverse topological order and accumulates ``.grad``
buffers.  Graphs are never reused; a second ``backward()`` on the same
root raises.

Arrays are float32 by default (float64 is accepted and propagated, which
the finite-difference test harness relies on).  Tensors without a
gradient requirement are plain immutable value carriers and safe to
share across threads; a graph and its backward pass belong to a single
thread.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NumericError, UsageError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference / baselines)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """A numpy array plus an optional gradient buffer and graph linkage."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad: bool = False):
        if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
            self.data = data
        else:
            self.data = np.asarray(data, dtype=np.float32)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward: Optional[Callable] = None
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def detach(self) -> "Tensor":
        """A view of the same values with no graph linkage."""
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self):
        """Reverse pass from a scalar root; populates ``.grad`` on every
        reachable tensor that requires a gradient."""
        if self.size != 1:
            raise UsageError(f"backward() needs a scalar root, got shape {self.shape}")
        if self._consumed:
            raise UsageError("backward() called twice on the same graph")
        self._consumed = True

        order: list[Tensor] = []
        seen = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                # single-pass probe: any NaN/Inf in g poisons the sum
                if not np.isfinite(g.sum()):
                    raise NumericError("non-finite gradient in backward pass")
                parent._accumulate(g)
            # free what the closure captured; the graph is single-use
            node._backward = None
            node._parents = ()

    # Small scalar-friendly arithmetic; enough glue for composing losses.

    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __mul__(self, scalar):
        from . import ops

        return ops.scale(self, scalar)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops

        return ops.scale(self, -1.0)

    def sum(self):
        from . import ops

        return ops.total(self)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def make_node(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    """Wrap an op result, linking it into the graph when recording is on
    and some parent participates in differentiation."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


class Parameter:
    """A named, trainable tensor with per-parameter Adam state."""

    __slots__ = ("name", "value", "adam_m", "adam_v", "step")

    def __init__(self, name: str, data: np.ndarray):
        self.name = name
        self.value = Tensor(np.asarray(data, dtype=np.float32), requires_grad=True)
        self.adam_m = np.zeros_like(self.value.data)
        self.adam_v = np.zeros_like(self.value.data)
        self.step = 0

    @property
    def data(self) -> np.ndarray:
        return self.value.data

    @property
    def grad(self) -> Optional[np.ndarray]:
        return self.value.grad

    def zero_grad(self):
        self.value.grad = None

    def reset_optimizer(self):
        self.adam_m[:] = 0.0
        self.adam_v[:] = 0.0
        self.step = 0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape}, step={self.step})"


def check_finite(x: np.ndarray, what: str = "value"):
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite {what}")
