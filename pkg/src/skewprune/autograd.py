"""Dense float32 tensors with reverse-mode automatic differentiation.

Every differentiable op records its parents and a backward closure on the
output tensor. ``Tensor.backward`` walks the ancestors of the output in
exact reverse of construction order (each tensor carries a monotone
sequence number), so the traversal order is reproducible run to run.

Reductions (layer-norm statistics, softmax denominators, losses, means)
accumulate in float64 and cast the result back to float32.
"""

from __future__ import annotations

import contextlib
import itertools
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.special import erf

DTYPE = np.float32

_seq = itertools.count()
_grad_enabled = True


class DimensionError(ValueError):
    """Raised when tensor shapes are incompatible for an operation."""


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op", "_seq")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.ascontiguousarray(data, dtype=DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self._op = "leaf"
        self._seq = next(_seq)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def permute(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return permute(self, axes)

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf requiring grad."""
        if not self.requires_grad:
            raise RuntimeError("backward() on a tensor that does not require grad")
        if grad is None:
            if self.size != 1:
                raise DimensionError(f"implicit gradient needs a scalar output, got shape {self.shape}")
            grad = np.ones_like(self.data)
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=DTYPE)}
        for node in Graph.from_output(self).nodes:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                pg = np.asarray(pg, dtype=DTYPE)
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


@dataclass(frozen=True)
class Node:
    op: str
    input_ids: tuple[int, ...]
    output_id: int


class Graph:
    """Ancestors of an output tensor, ordered newest-first.

    ``nodes`` holds the tensors themselves; ``records`` gives the
    (op, inputs, output) view keyed by construction sequence number.
    """

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_output(cls, out: Tensor) -> "Graph":
        seen: dict[int, Tensor] = {}
        stack = [out]
        while stack:
            t = stack.pop()
            if id(t) in seen or not t.requires_grad:
                continue
            seen[id(t)] = t
            stack.extend(t._parents)
        return cls(sorted(seen.values(), key=lambda t: t._seq, reverse=True))

    @property
    def records(self) -> list[Node]:
        return [Node(t._op, tuple(p._seq for p in t._parents), t._seq) for t in self.nodes]


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward, op: str) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
        out._op = op
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    if lead:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), bw, "mul")


def matmul(a, b) -> Tensor:
    """Batched matrix product over the last two axes, numpy broadcasting on the rest."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(a.data @ b.data, (a, b), bw, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` stored (in_features, out_features)."""
    if x.shape[-1] != weight.shape[0]:
        raise DimensionError(f"linear: input {x.shape} does not match weight {weight.shape}")
    lead = x.shape[:-1]
    flat = reshape(x, (-1, x.shape[-1]))
    y = matmul(flat, weight)
    if bias is not None:
        y = add(y, bias)
    return reshape(y, lead + (weight.shape[1],))


# ---------------------------------------------------------------- shape ops

def reshape(x: Tensor, shape) -> Tensor:
    x = as_tensor(x)
    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {x.shape} as {tuple(shape)}") from None

    def bw(g):
        return (g.reshape(x.shape),)

    return _make(data, (x,), bw, "reshape")


def permute(x: Tensor, axes) -> Tensor:
    x = as_tensor(x)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def bw(g):
        return (np.transpose(g, inv),)

    return _make(np.transpose(x.data, axes), (x,), bw, "permute")


def roll(x: Tensor, shifts: tuple[int, ...], axes: tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    neg = tuple(-s for s in shifts)

    def bw(g):
        return (np.roll(g, neg, axis=axes),)

    return _make(np.roll(x.data, shifts, axis=axes), (x,), bw, "roll")


def embedding(table: Tensor, ids) -> Tensor:
    """Row lookup ``table[ids]``; output shape ``ids.shape + (dim,)``."""
    ids = np.asarray(ids, dtype=np.int64)
    n = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise IndexError(f"embedding: ids must lie in [0, {n}), got range [{ids.min()}, {ids.max()}]")

    def bw(g):
        gt = np.zeros(table.shape, dtype=np.float64)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt.astype(DTYPE),)

    return _make(table.data[ids], (table,), bw, "embedding")


# ---------------------------------------------------------------- reductions

def sum_all(x: Tensor) -> Tensor:
    def bw(g):
        return (np.broadcast_to(g, x.shape),)

    return _make(np.array(x.data.sum(dtype=np.float64)), (x,), bw, "sum")


def mean(x: Tensor, axis: int) -> Tensor:
    n = x.shape[axis]

    def bw(g):
        return (np.broadcast_to(np.expand_dims(g, axis) / n, x.shape),)

    return _make(x.data.mean(axis=axis, dtype=np.float64), (x,), bw, "mean")


# ---------------------------------------------------------------- layers

def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis with population variance."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(f"layer_norm: last dim {d} vs gamma {gamma.shape} / beta {beta.shape}")
    x64 = x.data.astype(np.float64)
    mu = x64.mean(axis=-1, keepdims=True)
    xc = x64 - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    with np.errstate(divide="ignore"):
        inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    g64, b64 = gamma.data.astype(np.float64), beta.data.astype(np.float64)

    def bw(g):
        g = g.astype(np.float64)
        gx = g * g64
        gin = inv * (gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return gin, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _make(xhat * g64 + b64, (x, gamma, beta), bw, "layer_norm")


_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x: Tensor) -> Tensor:
    """Exact GeLU ``x * Phi(x)`` using erf."""
    x64 = x.data.astype(np.float64)
    cdf = 0.5 * (1.0 + erf(x64 / _SQRT2))

    def bw(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x64 * x64)
        return (g * (cdf + x64 * pdf),)

    return _make(x64 * cdf, (x,), bw, "gelu")


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis (max-subtracted)."""
    x64 = x.data.astype(np.float64)
    e = np.exp(x64 - x64.max(axis=-1, keepdims=True))
    y = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        g = g.astype(np.float64)
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _make(y, (x,), bw, "softmax")


def cross_entropy(logits: Tensor, labels, class_weights=None) -> Tensor:
    """Mean negative log-likelihood; with class weights it is the weighted mean."""
    labels = np.asarray(labels, dtype=np.int64)
    b, k = logits.shape
    if labels.shape != (b,):
        raise DimensionError(f"cross_entropy: {b} logit rows but labels shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise IndexError(f"cross_entropy: labels must lie in [0, {k})")
    z = logits.data.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    if class_weights is None:
        w = np.ones(b)
    else:
        cw = np.asarray(getattr(class_weights, "data", class_weights), dtype=np.float64)
        if cw.shape != (k,):
            raise DimensionError(f"cross_entropy: class_weights shape {cw.shape}, expected ({k},)")
        w = cw[labels]
    wsum = w.sum()
    rows = np.arange(b)
    loss = -(w * logp[rows, labels]).sum() / wsum

    def bw(g):
        p = np.exp(logp)
        p[rows, labels] -= 1.0
        return (float(np.asarray(g).reshape(-1)[0]) * p * (w / wsum)[:, None],)

    return _make(np.array(loss), (logits,), bw, "cross_entropy")
