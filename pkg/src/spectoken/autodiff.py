"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations only record themselves while a :class:`Tape` is active, so plain
inference runs without any bookkeeping::

    w = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        loss = (w * w).sum() * 0.5
    tape.backward(loss)
    w.grad  # -> array([1., 1., 1.])
"""

from __future__ import annotations

import threading
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import erf

LEAKY_SLOPE = 0.01
LN_EPS = 1e-5

_SQRT_HALF = np.sqrt(0.5)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class ContractError(RuntimeError):
    """A documented precondition of an operation was violated."""


_local = threading.local()


def _tape_stack() -> list:
    stack = getattr(_local, "tapes", None)
    if stack is None:
        stack = _local.tapes = []
    return stack


def current_tape() -> Optional["Tape"]:
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """A float64 array that can take part in a gradient tape."""

    __slots__ = ("data", "grad", "requires_grad", "tape_id", "name",
                 "_parents", "_backward", "_g")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.tape_id: Optional[int] = None
        self.name = name
        self._parents: tuple = ()
        self._backward: Optional[Callable] = None
        self._g: Optional[np.ndarray] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)


class Tape:
    """Ordered record of differentiable operations.

    Nodes are appended as they are created, which is already a topological
    order. A tape is bound to the thread that entered it.
    """

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def record(self, out: Tensor, parents: Sequence[Tensor], backward: Callable) -> Tensor:
        out._parents = tuple(parents)
        out._backward = backward
        out.tape_id = len(self.nodes)
        self.nodes.append(out)
        return out

    def backward(self, loss: Tensor) -> None:
        backward(self, loss)


def backward(tape: Tape, loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every reachable leaf.

    Gradients accumulate; call ``zero_grad`` on the leaves between passes.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    tid = loss.tape_id
    if tid is None or tid >= len(tape.nodes) or tape.nodes[tid] is not loss:
        if loss.requires_grad:
            loss.grad = np.ones_like(loss.data) if loss.grad is None else loss.grad + 1.0
            return
        raise ContractError("loss was not recorded on this tape")

    loss._g = np.ones_like(loss.data)
    try:
        for node in reversed(tape.nodes[: tid + 1]):
            g = node._g
            if g is None:
                continue
            node._g = None
            grads = node._backward(g)
            for parent, pg in zip(node._parents, grads):
                if pg is None:
                    continue
                if parent.tape_id is not None:
                    parent._g = pg if parent._g is None else parent._g + pg
                elif parent.requires_grad:
                    parent.grad = pg.copy() if parent.grad is None else parent.grad + pg
    finally:
        for node in tape.nodes:
            node._g = None


# ----------------------------------------------------------------------------
# helpers

def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _tracked(t: Tensor) -> bool:
    return t.requires_grad or t.tape_id is not None


def _result(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = False
    out.tape_id = None
    out.name = None
    out._parents = ()
    out._backward = None
    out._g = None
    tape = current_tape()
    if tape is not None and any(_tracked(p) for p in parents):
        tape.record(out, parents, backward_fn)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None


# ----------------------------------------------------------------------------
# binary ops

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    sa, sb = a.shape, b.shape
    return _result(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _result(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    """Elementwise (Hadamard) product with numpy broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return _result(ad * bd, (a, b),
                   lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    ad, bd = a.data, b.data
    out = ad / bd
    return _result(out, (a, b),
                   lambda g: (_unbroadcast(g / bd, ad.shape),
                              _unbroadcast(-g * out / bd, bd.shape)))


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >= 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def bw(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return _result(ad @ bd, (a, b), bw)


# ----------------------------------------------------------------------------
# shape ops

def sum_(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    shape = x.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _result(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), bw)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    if axis is None:
        count = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([x.shape[a] for a in axes]))
    return sum_(x, axis, keepdims) * (1.0 / count)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x, axes=None) -> Tensor:
    """Reverse all axes, or permute them by ``axes``."""
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inv = tuple(np.argsort(axes))
    return _result(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def swap_last(x) -> Tensor:
    x = as_tensor(x)
    return _result(np.swapaxes(x.data, -1, -2), (x,), lambda g: (np.swapaxes(g, -1, -2),))


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    ax = axis % ts[0].ndim
    for t in ts[1:]:
        if t.ndim != ts[0].ndim or any(
                t.shape[i] != ts[0].shape[i] for i in range(t.ndim) if i != ax):
            raise ShapeError(f"concat: incompatible shapes {[t.shape for t in ts]}")
    sizes = [t.shape[ax] for t in ts]
    cuts = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, cuts, axis=ax))

    return _result(np.concatenate([t.data for t in ts], axis=ax), ts, bw)


def take(x, index) -> Tensor:
    """Gather rows of ``x`` along axis 0; output shape is ``index.shape + x.shape[1:]``."""
    x = as_tensor(x)
    idx = np.asarray(index, dtype=np.int64)
    shape = x.shape

    def bw(g):
        out = np.zeros(shape)
        np.add.at(out, idx.reshape(-1), g.reshape((-1,) + shape[1:]))
        return (out,)

    return _result(x.data[idx], (x,), bw)


def index_add(x, index, n: int) -> Tensor:
    """Sum rows of ``x`` into ``n`` output rows: ``out[index[i]] += x[i]``."""
    x = as_tensor(x)
    idx = np.asarray(index, dtype=np.int64)
    if idx.shape != x.shape[:1]:
        raise ShapeError(f"index_add: {idx.shape} indices for {x.shape[0]} rows")
    out = np.zeros((n,) + x.shape[1:])
    np.add.at(out, idx, x.data)
    return _result(out, (x,), lambda g: (g[idx],))


# ----------------------------------------------------------------------------
# elementwise

def unary(x, fn: Callable, deriv: Callable) -> Tensor:
    """Apply ``fn`` elementwise; ``deriv(x, y)`` gives dy/dx."""
    x = as_tensor(x)
    xd = x.data
    y = fn(xd)
    return _result(y, (x,), lambda g: (g * deriv(xd, y),))


class KinkMonitor:
    """Records the sign pattern at every non-smooth point crossed in a forward pass."""

    def __init__(self):
        self.patterns: list[np.ndarray] = []

    def __enter__(self):
        _local.kink = self
        return self

    def __exit__(self, *exc):
        _local.kink = None

    def same_as(self, other: "KinkMonitor") -> bool:
        if len(self.patterns) != len(other.patterns):
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.patterns, other.patterns))


def _note_kink(xd: np.ndarray) -> None:
    mon = getattr(_local, "kink", None)
    if mon is not None:
        mon.patterns.append(xd > 0)


def relu(x) -> Tensor:
    x = as_tensor(x)
    _note_kink(x.data)
    return unary(x, lambda v: np.maximum(v, 0.0), lambda v, y: (v > 0).astype(np.float64))


def leaky_relu(x, slope: float = LEAKY_SLOPE) -> Tensor:
    x = as_tensor(x)
    _note_kink(x.data)
    return unary(x, lambda v: np.where(v > 0, v, slope * v),
                 lambda v, y: np.where(v > 0, 1.0, slope))


def abs_(x) -> Tensor:
    x = as_tensor(x)
    _note_kink(x.data)
    return unary(x, np.abs, lambda v, y: np.sign(v))


def gelu(x) -> Tensor:
    """Exact (erf-based) GELU."""
    return unary(x, lambda v: 0.5 * v * (1.0 + erf(v * _SQRT_HALF)),
                 lambda v, y: 0.5 * (1.0 + erf(v * _SQRT_HALF))
                 + v * _INV_SQRT_2PI * np.exp(-0.5 * v * v))


def exp(x) -> Tensor:
    return unary(x, np.exp, lambda v, y: y)


def log(x) -> Tensor:
    return unary(x, np.log, lambda v, y: 1.0 / v)


def sigmoid(x) -> Tensor:
    return unary(x, _stable_sigmoid, lambda v, y: y * (1.0 - y))


def softplus(x) -> Tensor:
    """log(1 + e^x), stable for large |x|."""
    return unary(x, lambda v: np.logaddexp(0.0, v), lambda v, y: _stable_sigmoid(v))


def _stable_sigmoid(v: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def activation(name: str) -> Callable[[Tensor], Tensor]:
    try:
        return {"relu": relu, "gelu": gelu, "leaky_relu": leaky_relu}[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}") from None


# ----------------------------------------------------------------------------
# normalisation, attention helpers

def softmax(x, axis: int = -1, mask: Optional[np.ndarray] = None) -> Tensor:
    """Max-stabilised softmax. Entries where ``mask`` is False get probability 0.

    Every slice needs at least one unmasked entry.
    """
    x = as_tensor(x)
    z = x.data
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _result(y, (x,), bw)


def layer_norm(x, gamma=None, beta=None, eps: float = LN_EPS) -> Tensor:
    """Normalise the last axis to zero mean and unit variance, then scale and shift.

    Constant rows map to zeros.
    """
    x = as_tensor(x)
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def bw(g):
        return (inv * (g - g.mean(axis=-1, keepdims=True)
                       - xhat * (g * xhat).mean(axis=-1, keepdims=True)),)

    out = _result(xhat, (x,), bw)
    if gamma is not None:
        out = out * gamma
    if beta is not None:
        out = out + beta
    return out


def dropout(x, rate: float, train: bool, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Inverted dropout. Identity unless ``train`` is set and ``rate > 0``."""
    x = as_tensor(x)
    if not train or rate <= 0.0:
        return x
    if rng is None:
        raise ContractError("dropout in training mode needs an explicit rng")
    if rate >= 1.0:
        return x * 0.0
    keep = (rng.random(x.shape) >= rate).astype(np.float64) / (1.0 - rate)
    return x * keep


# ----------------------------------------------------------------------------
# gradient checking

def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-5,
               coords: Optional[np.ndarray] = None,
               rng: Optional[np.random.Generator] = None,
               max_retries: int = 5) -> float:
    """Largest |analytic - central difference| / max(1, |central difference|).

    ``f`` must return a scalar. If a perturbation of ``x`` flips the side of
    any relu/abs kink, ``x`` is jittered and the check restarts. ``coords``
    restricts the check to a subset of flat indices. ``x.data`` is restored
    on return.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    original = x.data.copy()
    flat_idx = np.arange(x.size) if coords is None else np.asarray(coords)
    try:
        for attempt in range(max_retries + 1):
            err = _grad_check_once(f, x, h, flat_idx)
            if err is not None:
                return err
            x.data = original + rng.uniform(-1, 1, original.shape) * (100 * h)
        # kinks everywhere: fall back to the last jittered point, accepting straddles
        return _grad_check_once(f, x, h, flat_idx, strict=False)
    finally:
        x.data = original


def _grad_check_once(f, x: Tensor, h: float, flat_idx, strict: bool = True):
    was = x.requires_grad
    x.requires_grad = True
    saved_grad = x.grad
    x.grad = None
    with KinkMonitor() as base, Tape() as tape:
        y = f(x)
    tape.backward(y)
    analytic = np.zeros(x.shape) if x.grad is None else x.grad
    x.grad = saved_grad
    x.requires_grad = was

    flat = x.data.reshape(-1)
    worst = 0.0
    for i in flat_idx:
        old = flat[i]
        flat[i] = old + h
        step = flat[i]
        with KinkMonitor() as up:
            fp = f(x).item()
        flat[i] = old - h
        step -= flat[i]  # the representable step, not 2h
        with KinkMonitor() as down:
            fm = f(x).item()
        flat[i] = old
        if strict and not (base.same_as(up) and base.same_as(down)):
            return None
        fd = (fp - fm) / step
        worst = max(worst, abs(analytic.reshape(-1)[i] - fd) / max(1.0, abs(fd)))
    return worst
