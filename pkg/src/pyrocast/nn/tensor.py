"""Reverse-mode automatic differentiation over float32 numpy arrays.

A :class:`Tensor` wraps a row-major float32 ndarray together with an optional
gradient buffer.  Operations build a graph of parent links and backward
closures; calling :meth:`Tensor.backward` on a scalar result walks the graph
in reverse topological order and accumulates gradients into every tensor that
was created with ``requires_grad=True``.

Only the primitives the bundled networks need are provided.  Elementwise
arithmetic requires matching shapes (or a Python scalar); there is no general
broadcasting.  Layers that need broadcast-style bias addition handle it
explicitly in their own backward rules (see :mod:`pyrocast.nn.ops`).
"""

from __future__ import annotations

import contextlib
import contextvars
from typing import Callable, Iterable, Iterator

import numpy as np

from ..errors import DimensionError, NumericError

# Context variables rather than plain globals so concurrent training jobs
# cannot toggle each other's inference mode.
_grad_enabled: contextvars.ContextVar[bool] = contextvars.ContextVar(
    "grad_enabled", default=True)
_debug_checks: contextvars.ContextVar[bool] = contextvars.ContextVar(
    "debug_checks", default=False)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph construction inside the block.  Used on inference paths."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def grad_enabled() -> bool:
    return _grad_enabled.get()


def set_debug_checks(enabled: bool) -> None:
    """Verify every op output is finite.  Slow; meant for tests."""
    _debug_checks.set(bool(enabled))


def _as_f32(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
        # ascontiguousarray would promote 0-d scalars to 1-d, so guard on ndim
        arr = np.ascontiguousarray(arr)
    return arr


class Tensor:
    """A float32 array with an optional gradient and a backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data: np.ndarray = _as_f32(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    # -- construction used by every op ------------------------------------

    @staticmethod
    def _result(data: np.ndarray, parents: Iterable["Tensor"],
                backward: Callable[[np.ndarray], None]) -> "Tensor":
        out = Tensor(data)
        if _debug_checks.get() and not np.all(np.isfinite(out.data)):
            raise NumericError("operation produced non-finite values")
        if _grad_enabled.get():
            parents = tuple(parents)
            if any(p.requires_grad for p in parents):
                out.requires_grad = True
                out._parents = parents
                out._backward = backward
        return out

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = g.astype(np.float32, copy=True)
        else:
            self.grad += g

    # -- bookkeeping -------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        """A view of the same data with no graph history."""
        return Tensor(self.data)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # -- backward pass -----------------------------------------------------

    def backward(self) -> None:
        """Accumulate gradients of this scalar into every tracked parent."""
        if self.data.size != 1:
            raise DimensionError("backward() requires a scalar tensor")
        order: list[Tensor] = []
        seen: set[int] = set()
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
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)
        if _debug_checks.get():
            for node in order:
                if node.grad is not None and not np.all(np.isfinite(node.grad)):
                    raise NumericError("backward pass produced non-finite gradients")

    # -- elementwise arithmetic (matching shapes or Python scalar) ---------

    def _coerce(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            if other.data.shape != self.data.shape:
                raise DimensionError(
                    f"elementwise op needs matching shapes, got {self.data.shape} "
                    f"and {other.data.shape}")
            return other
        if np.isscalar(other):
            return Tensor(np.full_like(self.data, float(other)))
        raise DimensionError("operand must be a Tensor or a scalar")

    def __add__(self, other) -> "Tensor":
        o = self._coerce(other)
        s = self

        def backward(g: np.ndarray) -> None:
            s._accumulate(g)
            o._accumulate(g)

        return Tensor._result(self.data + o.data, (self, o), backward)

    def __sub__(self, other) -> "Tensor":
        o = self._coerce(other)
        s = self

        def backward(g: np.ndarray) -> None:
            s._accumulate(g)
            o._accumulate(-g)

        return Tensor._result(self.data - o.data, (self, o), backward)

    def __mul__(self, other) -> "Tensor":
        o = self._coerce(other)
        s = self

        def backward(g: np.ndarray) -> None:
            s._accumulate(g * o.data)
            o._accumulate(g * s.data)

        return Tensor._result(self.data * o.data, (self, o), backward)

    def __neg__(self) -> "Tensor":
        s = self

        def backward(g: np.ndarray) -> None:
            s._accumulate(-g)

        return Tensor._result(-self.data, (self,), backward)

    __radd__ = __add__
    __rmul__ = __mul__

    # -- shape and reduction -----------------------------------------------

    def reshape(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        s = self

        def backward(g: np.ndarray) -> None:
            s._accumulate(g.reshape(old))

        return Tensor._result(self.data.reshape(shape), (self,), backward)

    def sum(self) -> "Tensor":
        s = self

        def backward(g: np.ndarray) -> None:
            s._accumulate(np.full_like(s.data, float(g)))

        return Tensor._result(self.data.sum(dtype=np.float32), (self,), backward)

    def mean(self) -> "Tensor":
        s = self
        n = float(self.data.size)

        def backward(g: np.ndarray) -> None:
            s._accumulate(np.full_like(s.data, float(g) / n))

        return Tensor._result(self.data.mean(dtype=np.float32), (self,), backward)
