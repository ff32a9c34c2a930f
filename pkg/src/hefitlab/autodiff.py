"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Every op is a plain function taking :class:`Tensor` inputs and returning a new
:class:`Tensor` that remembers its parents together with a closure mapping
the output gradient to one gradient per parent.  :func:`backward` walks the
recorded graph once in reverse topological order.

Only the handful of ops needed by the encoder are provided, and broadcasting
is limited to adding a bias vector along the last axis.
"""

from __future__ import annotations

import math
import threading
from contextlib import contextmanager
from typing import Any, Callable, Iterator, Sequence

import numpy as np

from .errors import GraphStateError, NumericError, ParameterError, ShapeError

_state = threading.local()

GradFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Build no graph inside the block; outputs never require grad."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


def _check_finite(values: np.ndarray, what: str) -> None:
    if not np.isfinite(values).all():
        raise NumericError(f"non-finite values in {what}")


class Tensor:
    """A float64 array with an optional gradient buffer.

    ``grad`` is ``None`` until a backward pass reaches the tensor, and it is
    never allocated for tensors with ``requires_grad=False``.
    """

    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_grad_fn", "_consumed")

    def __init__(self, data: Any, requires_grad: bool = False, *, op: str = "leaf") -> None:
        arr = np.asarray(data, dtype=np.float64)
        _check_finite(arr, op)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.op = op
        self._parents: tuple[Tensor, ...] = ()
        self._grad_fn: GradFn | None = None
        self._consumed = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single value, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"


def _result(data: np.ndarray, parents: tuple[Tensor, ...], grad_fn: GradFn, op: str) -> Tensor:
    out = Tensor(data, op=op)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._grad_fn = grad_fn
    return out


# ---------------------------------------------------------------------------
# ops
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` for ``a (..., m, k)`` with ``b (k, n)`` or ``b (..., k, n)``."""
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    shared = b.data.ndim == 2
    if not shared and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul batch dimensions differ: {a.shape} @ {b.shape}")
    av, bv = a.data, b.data

    def grad_fn(g: np.ndarray):
        ga = g @ np.swapaxes(bv, -1, -2) if a.requires_grad else None
        gb = None
        if b.requires_grad:
            if shared:
                gb = av.reshape(-1, av.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = np.swapaxes(av, -1, -2) @ g
        return ga, gb

    return _result(av @ bv, (a, b), grad_fn, "matmul")


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may also be a bias vector over the last axis."""
    bias = b.data.ndim == 1 and a.data.ndim > 1
    if bias:
        if b.shape[0] != a.shape[-1]:
            raise ShapeError(f"bias length {b.shape[0]} does not match last dimension of {a.shape}")
    elif a.shape != b.shape:
        raise ShapeError(f"add operands differ in shape: {a.shape} vs {b.shape}")

    def grad_fn(g: np.ndarray):
        gb = None
        if b.requires_grad:
            gb = g.reshape(-1, g.shape[-1]).sum(axis=0) if bias else g
        return (g if a.requires_grad else None), gb

    return _result(a.data + b.data, (a, b), grad_fn, "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul operands differ in shape: {a.shape} vs {b.shape}")
    av, bv = a.data, b.data

    def grad_fn(g: np.ndarray):
        return (g * bv if a.requires_grad else None), (g * av if b.requires_grad else None)

    return _result(av * bv, (a, b), grad_fn, "mul")


def scale(x: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    return _result(x.data * factor, (x,), lambda g: (g * factor,), "scale")


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    src = x.shape
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {src} to {tuple(shape)}") from exc
    return _result(out, (x,), lambda g: (g.reshape(src),), "reshape")


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(x.data.ndim)):
        raise ShapeError(f"axes {axes} are not a permutation for shape {x.shape}")
    inverse = tuple(np.argsort(axes))
    return _result(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),), "transpose")


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _result(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    v = x.data
    v2 = v * v
    inner = _GELU_C * (v + 0.044715 * v2 * v)
    t = np.tanh(inner)
    y = 0.5 * v * (1.0 + t)

    def grad_fn(g: np.ndarray):
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * v2)
        return (g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * d_inner),)

    return _result(y, (x,), grad_fn, "gelu")


def softmax(x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis.

    ``mask`` is a constant additive term broadcastable to ``x`` (large negative
    entries switch positions off).
    """
    z = x.data if mask is None else x.data + mask
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def grad_fn(g: np.ndarray):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _result(y, (x,), grad_fn, "softmax")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm params must have shape ({d},), got {gamma.shape} and {beta.shape}")
    v = x.data
    mu = v.mean(axis=-1, keepdims=True)
    xc = v - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    gv = gamma.data

    def grad_fn(g: np.ndarray):
        gx = None
        if x.requires_grad:
            gh = g * gv
            gx = inv * (gh - gh.mean(axis=-1, keepdims=True) - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        flat = g.reshape(-1, d)
        gg = (flat * xhat.reshape(-1, d)).sum(axis=0) if gamma.requires_grad else None
        gb = flat.sum(axis=0) if beta.requires_grad else None
        return gx, gg, gb

    return _result(xhat * gv + beta.data, (x, gamma, beta), grad_fn, "layer_norm")


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup ``table[ids]``; ``ids`` is a constant integer array of any shape."""
    ids = np.asarray(ids)
    if table.data.ndim != 2:
        raise ShapeError(f"embedding table must be 2-d, got {table.shape}")
    if not np.issubdtype(ids.dtype, np.integer):
        raise ShapeError("embedding ids must be integers")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"embedding id out of range [0, {table.shape[0]})")
    n, d = table.shape

    def grad_fn(g: np.ndarray):
        gt = np.zeros((n, d))
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, d))
        return (gt,)

    return _result(table.data[ids], (table,), grad_fn, "embedding")


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: kept values are scaled by ``1/(1-p)`` at train time."""
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ParameterError("train-mode dropout needs an explicit rng")
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return _result(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


def mean_pool(x: Tensor, mask: np.ndarray) -> Tensor:
    """Average ``x (B, T, D)`` over positions where ``mask (B, T)`` is true."""
    mask = np.asarray(mask, dtype=bool)
    if x.data.ndim != 3 or mask.shape != x.shape[:2]:
        raise ShapeError(f"mean_pool needs x (B, T, D) and mask (B, T), got {x.shape} and {mask.shape}")
    counts = mask.sum(axis=1)
    if (counts == 0).any():
        raise ShapeError("mean_pool mask selects no position for some row")
    w = mask[:, :, None] / counts[:, None, None]

    def grad_fn(g: np.ndarray):
        return (g[:, None, :] * w,)

    return _result((x.data * w).sum(axis=1), (x,), grad_fn, "mean_pool")


def mse(pred: Tensor, target: Tensor | np.ndarray) -> Tensor:
    """Mean of squared differences; the target never receives a gradient."""
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    if pred.shape != t.shape:
        raise ShapeError(f"mse operands differ in shape: {pred.shape} vs {t.shape}")
    if pred.data.size == 0:
        raise ShapeError("mse over an empty batch")
    _check_finite(t, "mse target")
    diff = pred.data - t
    n = diff.size
    return _result(np.asarray((diff * diff).sum() / n), (pred,), lambda g: (g * 2.0 * diff / n,), "mse")


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer ``targets (N,)`` under ``logits (N, V)``."""
    targets = np.asarray(targets)
    if logits.data.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy needs logits (N, V) and targets (N,), got {logits.shape} and {targets.shape}")
    n = targets.shape[0]
    if n == 0:
        raise ShapeError("cross_entropy over zero rows")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(n)
    loss = -logp[rows, targets].sum() / n

    def grad_fn(g: np.ndarray):
        p = np.exp(logp)
        p[rows, targets] -= 1.0
        return (g * p / n,)

    return _result(np.asarray(loss), (logits,), grad_fn, "cross_entropy")


_OPS: dict[str, Callable[..., Tensor]] = {
    "matmul": matmul,
    "add": add,
    "mul": mul,
    "scale": scale,
    "reshape": reshape,
    "transpose": transpose,
    "tanh": tanh,
    "gelu": gelu,
    "softmax": softmax,
    "layer_norm": layer_norm,
    "embedding": embedding,
    "dropout": dropout,
    "mean_pool": mean_pool,
    "mse": mse,
    "cross_entropy": cross_entropy,
}
OP_KINDS = tuple(_OPS)


def forward_op(op_kind: str, inputs: Sequence[Tensor], attrs: dict[str, Any] | None = None) -> Tensor:
    """Dispatch by op name; ``attrs`` are passed as keyword arguments."""
    try:
        fn = _OPS[op_kind]
    except KeyError:
        raise ParameterError(f"unknown op {op_kind!r}") from None
    return fn(*inputs, **(attrs or {}))


# ---------------------------------------------------------------------------
# graph traversal
# ---------------------------------------------------------------------------


class ComputationGraph:
    """Topologically ordered view of everything a loss depends on."""

    def __init__(self, nodes: list[Tensor]) -> None:
        self.nodes = nodes

    @classmethod
    def trace(cls, root: Tensor) -> "ComputationGraph":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
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
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        return cls(order)

    @property
    def leaves(self) -> list[Tensor]:
        return [n for n in self.nodes if n.is_leaf]


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every trainable leaf.

    The graph is released afterwards; a second call raises GraphStateError.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._consumed:
        raise GraphStateError("backward already ran on this graph; run the forward pass again")
    if not loss.requires_grad:
        return
    graph = ComputationGraph.trace(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(graph.nodes):
        g = grads.pop(id(node), None)
        if node.is_leaf:
            if g is not None:
                _check_finite(g, "gradient")
                node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        if node._grad_fn is None:
            raise GraphStateError("graph was already consumed by an earlier backward pass")
        if g is None:
            continue
        for parent, pg in zip(node._parents, node._grad_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg
    for node in graph.nodes:
        if not node.is_leaf:
            node._grad_fn = None
            node._consumed = True
    loss._consumed = True
