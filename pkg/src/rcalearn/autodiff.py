"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

A Tensor wraps an ndarray and remembers how it was produced; calling
``backward()`` on a scalar result walks the graph once in reverse
topological order and accumulates gradients into every tensor that
requires them. Only the operations the learning modules actually use are
implemented; there is no broadcasting beyond what those call sites need.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NonFiniteError

Array = np.ndarray


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """Float64 array node in a dynamically built computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: tuple["Tensor", ...] = (),
        _backward: Callable[[Array], None] | None = None,
    ):
        self.data: Array = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(self.data)):
            raise NonFiniteError("tensor holds NaN or Inf")
        self.grad: Array | None = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
        # constant subgraphs keep no history
        self._parents = _parents if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError("item() needs a single-element tensor")
        return float(self.data.reshape(()))

    # -- graph execution ---------------------------------------------------

    def _accum(self, grad: Array) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def backward(self) -> None:
        """Reverse pass from a scalar output; fills `.grad` on reachable tensors."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        # iterative DFS post-order so deep graphs cannot hit the recursion limit
        order: list[Tensor] = []
        seen: set[int] = {id(self)}
        stack: list[tuple[Tensor, int]] = [(self, 0)]
        while stack:
            node, idx = stack[-1]
            if idx < len(node._parents):
                stack[-1] = (node, idx + 1)
                parent = node._parents[idx]
                if id(parent) not in seen and parent.requires_grad:
                    seen.add(id(parent))
                    stack.append((parent, 0))
            else:
                order.append(node)
                stack.pop()
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    # -- elementwise and arithmetic ops ------------------------------------

    def __add__(self, other) -> "Tensor":
        other = _promote(other)
        out = Tensor(self.data + other.data, _parents=(self, other))
        if out.requires_grad:
            def _bw(g: Array, a=self, b=other) -> None:
                a._accum(_unbroadcast(g, a.shape))
                b._accum(_unbroadcast(g, b.shape))
            out._backward = _bw
        return out

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        out = Tensor(-self.data, _parents=(self,))
        if out.requires_grad:
            def _bw(g: Array, a=self) -> None:
                a._accum(-g)
            out._backward = _bw
        return out

    def __sub__(self, other) -> "Tensor":
        return self + (-_promote(other))

    def __rsub__(self, other) -> "Tensor":
        return _promote(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = _promote(other)
        out = Tensor(self.data * other.data, _parents=(self, other))
        if out.requires_grad:
            def _bw(g: Array, a=self, b=other) -> None:
                a._accum(_unbroadcast(g * b.data, a.shape))
                b._accum(_unbroadcast(g * a.data, b.shape))
            out._backward = _bw
        return out

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = _promote(other)
        out = Tensor(self.data / other.data, _parents=(self, other))
        if out.requires_grad:
            def _bw(g: Array, a=self, b=other) -> None:
                a._accum(_unbroadcast(g / b.data, a.shape))
                b._accum(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))
            out._backward = _bw
        return out

    def matmul(self, other: "Tensor") -> "Tensor":
        other = _promote(other)
        if self.ndim < 2 or other.ndim < 2:
            raise ValueError("matmul operands must have at least 2 dimensions")
        out = Tensor(self.data @ other.data, _parents=(self, other))
        if out.requires_grad:
            def _bw(g: Array, a=self, b=other) -> None:
                a._accum(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
                b._accum(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))
            out._backward = _bw
        return out

    __matmul__ = matmul

    def tanh(self) -> "Tensor":
        y = np.tanh(self.data)
        out = Tensor(y, _parents=(self,))
        if out.requires_grad:
            def _bw(g: Array, a=self, y=y) -> None:
                a._accum(g * (1.0 - y * y))
            out._backward = _bw
        return out

    def sigmoid(self) -> "Tensor":
        with np.errstate(over="ignore"):
            y = 1.0 / (1.0 + np.exp(-self.data))
        out = Tensor(y, _parents=(self,))
        if out.requires_grad:
            def _bw(g: Array, a=self, y=y) -> None:
                a._accum(g * y * (1.0 - y))
            out._backward = _bw
        return out

    def exp(self) -> "Tensor":
        with np.errstate(over="ignore"):
            y = np.exp(self.data)
        out = Tensor(y, _parents=(self,))
        if out.requires_grad:
            def _bw(g: Array, a=self, y=y) -> None:
                a._accum(g * y)
            out._backward = _bw
        return out

    def log(self) -> "Tensor":
        # out-of-domain values become NaN and trip the ctor guard; the numpy
        # warning on the way there is redundant
        with np.errstate(invalid="ignore", divide="ignore"):
            out = Tensor(np.log(self.data), _parents=(self,))
        if out.requires_grad:
            def _bw(g: Array, a=self) -> None:
                a._accum(g / a.data)
            out._backward = _bw
        return out

    def sqrt(self) -> "Tensor":
        with np.errstate(invalid="ignore"):
            y = np.sqrt(self.data)
        out = Tensor(y, _parents=(self,))
        if out.requires_grad:
            def _bw(g: Array, a=self, y=y) -> None:
                a._accum(g * 0.5 / y)
            out._backward = _bw
        return out

    def abs(self) -> "Tensor":
        # subgradient at 0 is taken as 0 (np.sign(0) == 0)
        out = Tensor(np.abs(self.data), _parents=(self,))
        if out.requires_grad:
            def _bw(g: Array, a=self) -> None:
                a._accum(g * np.sign(a.data))
            out._backward = _bw
        return out

    # -- reductions and shape ops -------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), _parents=(self,))
        if out.requires_grad:
            def _bw(g: Array, a=self) -> None:
                gg = np.asarray(g)
                if axis is not None and not keepdims:
                    gg = np.expand_dims(gg, axis)
                a._accum(np.broadcast_to(gg, a.shape).copy())
            out._backward = _bw
        return out

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        count = self.data.size if axis is None else np.prod(
            [self.data.shape[ax] for ax in np.atleast_1d(axis)]
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(count))

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = Tensor(self.data.reshape(shape), _parents=(self,))
        if out.requires_grad:
            def _bw(g: Array, a=self) -> None:
                a._accum(np.asarray(g).reshape(a.shape))
            out._backward = _bw
        return out

    def transpose(self, axes: Sequence[int]) -> "Tensor":
        axes = tuple(axes)
        out = Tensor(self.data.transpose(axes), _parents=(self,))
        if out.requires_grad:
            inverse = tuple(np.argsort(axes))
            def _bw(g: Array, a=self) -> None:
                a._accum(g.transpose(inverse))
            out._backward = _bw
        return out

    def narrow(self, axis: int, start: int, length: int) -> "Tensor":
        if start < 0 or start + length > self.shape[axis]:
            raise ValueError("narrow slice out of bounds")
        index = [slice(None)] * self.ndim
        index[axis] = slice(start, start + length)
        index = tuple(index)
        out = Tensor(self.data[index], _parents=(self,))
        if out.requires_grad:
            def _bw(g: Array, a=self, index=index) -> None:
                full = np.zeros_like(a.data)
                full[index] = g
                a._accum(full)
            out._backward = _bw
        return out

    def softmax(self, axis: int = -1) -> "Tensor":
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        y = e / e.sum(axis=axis, keepdims=True)
        out = Tensor(y, _parents=(self,))
        if out.requires_grad:
            def _bw(g: Array, a=self, y=y) -> None:
                a._accum(y * (g - (g * y).sum(axis=axis, keepdims=True)))
            out._backward = _bw
        return out


def _promote(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(np.asarray(value, dtype=np.float64))


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    tensors = list(tensors)
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), _parents=tuple(tensors))
    if out.requires_grad:
        sizes = [t.shape[axis] for t in tensors]
        def _bw(g: Array, tensors=tensors, sizes=sizes) -> None:
            offset = 0
            for t, s in zip(tensors, sizes):
                index = [slice(None)] * g.ndim
                index[axis] = slice(offset, offset + s)
                t._accum(g[tuple(index)])
                offset += s
        out._backward = _bw
    return out


# -- acyclicity penalty ------------------------------------------------------


def _expm_taylor(m: Array, max_terms: int = 64) -> Array:
    """Matrix exponential by scaling-and-squaring with a truncated Taylor series.

    Scaling divides by an exact power of two and the series multiplies and
    adds, so exact zero patterns survive: for a nilpotent input (a DAG's
    Hadamard square) the diagonal of the result is exactly 1.
    """
    n = m.shape[0]
    norm = float(np.abs(m).sum(axis=0).max()) if n else 0.0
    squarings = 0
    scaled = m
    if norm > 0.5:
        squarings = int(math.ceil(math.log2(norm / 0.5)))
        scaled = m / (2.0 ** squarings)
    acc = np.eye(n)
    term = np.eye(n)
    for k in range(1, max_terms + 1):
        term = term @ scaled / k
        acc = acc + term
        peak = np.abs(term).max()
        if peak == 0.0 or peak < 1e-18 * np.abs(acc).max():
            break
    for _ in range(squarings):
        acc = acc @ acc
    return acc


def acyclicity_penalty(a) -> Tensor:
    """tr(exp(A o A)) - n; zero exactly when A is the adjacency of a DAG."""
    a = _promote(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("acyclicity_penalty needs a square matrix")
    n = a.shape[0]
    # diverged inputs produce non-finite traces that the Tensor ctor turns
    # into a typed error; suppress numpy's chatter on the way there
    with np.errstate(invalid="ignore", over="ignore"):
        expm = _expm_taylor(a.data * a.data)
    out = Tensor(np.trace(expm) - float(n), _parents=(a,))
    if out.requires_grad:
        def _bw(g: Array, a=a, expm=expm) -> None:
            a._accum(g * (expm.T * (2.0 * a.data)))
        out._backward = _bw
    return out


# -- optimizer ----------------------------------------------------------------


@dataclass
class AdamState:
    """Optimizer state: step count, per-parameter moments, hyperparameters."""

    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[Array] = field(default_factory=list)
    v: list[Array] = field(default_factory=list)


class Adam:
    """Adam with bias correction over an explicit parameter list."""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-2,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        if not all(p.requires_grad for p in self.params):
            raise ValueError("Adam parameters must require gradients")
        self.state = AdamState(
            lr=lr, beta1=beta1, beta2=beta2, eps=eps,
            m=[np.zeros_like(p.data) for p in self.params],
            v=[np.zeros_like(p.data) for p in self.params],
        )

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        s = self.state
        s.step += 1
        bc1 = 1.0 - s.beta1 ** s.step
        bc2 = 1.0 - s.beta2 ** s.step
        for p, m, v in zip(self.params, s.m, s.v):
            g = p.grad
            if g is None:
                continue
            if g.shape != p.data.shape:
                raise ValueError("gradient shape does not match parameter shape")
            if not np.all(np.isfinite(g)):
                raise NonFiniteError("non-finite gradient in Adam step")
            m *= s.beta1
            m += (1.0 - s.beta1) * g
            v *= s.beta2
            v += (1.0 - s.beta2) * (g * g)
            p.data -= s.lr * (m / bc1) / (np.sqrt(v / bc2) + s.eps)


# -- gradient verification -----------------------------------------------------


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    `f` must map one tensor to a scalar tensor. Relative error per coordinate
    is |analytic - fd| / max(|analytic|, |fd|, 1e-8).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    buffer = np.array(x.data, dtype=np.float64, copy=True)
    var = Tensor(buffer, requires_grad=True)
    out = f(var)
    if out.data.size != 1:
        raise ValueError("grad_check needs a scalar-valued function")
    out.backward()
    analytic = (var.grad if var.grad is not None else np.zeros_like(buffer)).reshape(-1)
    flat = buffer.reshape(-1)
    worst = 0.0
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + eps
        high = f(Tensor(buffer)).item()
        flat[i] = original - eps
        low = f(Tensor(buffer)).item()
        flat[i] = original
        fd = (high - low) / (2.0 * eps)
        denom = max(abs(analytic[i]), abs(fd), 1e-8)
        worst = max(worst, abs(analytic[i] - fd) / denom)
    return worst
