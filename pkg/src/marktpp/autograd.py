"""Small reverse-mode differentiation engine over dense float64 numpy arrays.

Each operation returns a new :class:`Tensor` that remembers its parents and a
closure mapping the output adjoint to parent adjoints. The graph is rebuilt on
every forward pass; :meth:`Tensor.backward` walks it once in reverse
topological order and accumulates into the ``grad`` slot of trainable leaves.

Numerical guards: ``log`` clamps its argument at ``EPS`` and ``div`` clamps
the magnitude of its denominator at ``EPS`` (sign preserved).
"""

from __future__ import annotations

import contextlib
import json
import math
from typing import Callable, Iterable, Sequence

import numpy as np
from numba import njit
from scipy import special

EPS = 1e-10
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class ShapeError(ValueError):
    pass


def _as_array(x) -> np.ndarray:
    if isinstance(x, np.ndarray) and x.dtype == np.float64:
        return x
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    ndiff = grad.ndim - len(shape)
    if ndiff > 0:
        grad = grad.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A graph node: value, parents, local backward rule and gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "name")
    # make numpy defer to the reflected operators (ndarray - Tensor -> Tensor)
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self.op = "leaf"
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Tensor({self.op}{tag}, shape={self.shape})"

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    # -- graph traversal ----------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
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
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)
            for p, pg in zip(node._parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                key = id(p)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- operator sugar -----------------------------------------------------

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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def tensor(x, requires_grad: bool = False) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, requires_grad=requires_grad)


def _node(data, parents: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
        out.op = op
    else:
        out.op = op
    return out


def _check_broadcast(op: str, a: Tensor, b: Tensor):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# -- elementwise binary ------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    _check_broadcast("add", a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    _check_broadcast("sub", a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _node(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    _check_broadcast("mul", a, b)

    def bw(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _node(a.data * b.data, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    _check_broadcast("div", a, b)
    den = np.where(np.abs(b.data) < EPS, np.where(b.data < 0, -EPS, EPS), b.data)
    out = a.data / den

    def bw(g):
        ga = _unbroadcast(g / den, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / den, b.shape) if b.requires_grad else None
        return ga, gb

    return _node(out, (a, b), bw, "div")


def neg(a) -> Tensor:
    a = tensor(a)
    return _node(-a.data, (a,), lambda g: (-g,), "neg")


def square(a) -> Tensor:
    a = tensor(a)
    return _node(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,), "square")


def matmul(a, b) -> Tensor:
    """``a @ b`` with numpy batching rules; ``b`` is usually a 2-D weight."""
    a, b = tensor(a), tensor(b)
    if a.ndim < 1 or b.ndim < 1 or a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = a.data @ b.data

    def bw(g):
        ga = gb = None
        if b.ndim == 1:
            if a.requires_grad:
                ga = g[..., None] * b.data
            if b.requires_grad:
                gb = (a.data * g[..., None]).reshape(-1, b.shape[0]).sum(0)
            return ga, gb
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if a.ndim > 1 else g @ b.data.T
        if b.requires_grad:
            if b.ndim == 2:
                a2 = a.data.reshape(-1, a.shape[-1]) if a.ndim > 1 else a.data[None, :]
                gb = a2.T @ g.reshape(-1, b.shape[-1])
            else:
                gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return _node(out, (a, b), bw, "matmul")


# -- elementwise unary -------------------------------------------------------


def exp(a) -> Tensor:
    a = tensor(a)
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    """Natural log with the argument clamped at ``EPS``."""
    a = tensor(a)
    clamped = np.maximum(a.data, EPS)
    live = a.data >= EPS

    def bw(g):
        return (np.where(live, g / clamped, 0.0),)

    return _node(np.log(clamped), (a,), bw, "log")


def tanh(a) -> Tensor:
    a = tensor(a)
    out = np.tanh(a.data)
    return _node(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(a) -> Tensor:
    a = tensor(a)
    out = special.expit(a.data)
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def softplus(a) -> Tensor:
    a = tensor(a)
    x = a.data
    out = np.logaddexp(0.0, x)
    return _node(out, (a,), lambda g: (g * special.expit(x),), "softplus")


def log_softplus(a) -> Tensor:
    """``log(softplus(x))`` without underflow for very negative ``x``."""
    a = tensor(a)
    x = a.data
    sp = np.logaddexp(0.0, x)
    # softplus(x) ~ exp(x) below -30; log is then x itself
    out = np.where(x < -30.0, x, np.log(np.maximum(sp, 1e-300)))
    ratio = np.where(x < -30.0, 1.0, special.expit(x) / np.maximum(sp, 1e-300))
    return _node(out, (a,), lambda g: (g * ratio,), "log_softplus")


def log_ndtr(a) -> Tensor:
    """log of the standard normal CDF."""
    a = tensor(a)
    x = a.data
    out = special.log_ndtr(x)

    def bw(g):
        return (g * np.exp(-0.5 * x * x - _LOG_SQRT_2PI - out),)

    return _node(out, (a,), bw, "log_ndtr")


def expm1_div(w, t) -> Tensor:
    """``(exp(w*t) - 1) / w`` with its ``w -> 0`` limit ``t``.

    A fourth-order series is used whenever ``|w*t| < 1e-3``, which covers the
    ``|w| < 1e-8`` singular band and the cancellation region around it.
    """
    w, t = tensor(w), tensor(t)
    _check_broadcast("expm1_div", w, t)
    wd, td = np.broadcast_arrays(w.data, t.data)
    x = wd * td
    small = np.abs(x) < 1e-3
    safe_w = np.where(small, 1.0, wd)
    series = td * (1.0 + x / 2.0 + x * x / 6.0 + x**3 / 24.0 + x**4 / 120.0)
    with np.errstate(over="ignore"):
        out = np.where(small, series, np.expm1(x) / safe_w)

    def bw(g):
        gw = gt = None
        if w.requires_grad:
            dser = td * td * (0.5 + x / 3.0 + x * x / 8.0 + x**3 / 30.0 + x**4 / 144.0)
            with np.errstate(over="ignore", invalid="ignore"):
                dfull = (td * np.exp(x) * wd - np.expm1(x)) / (safe_w * safe_w)
            gw = _unbroadcast(g * np.where(small, dser, dfull), w.shape)
        if t.requires_grad:
            gt = _unbroadcast(g * np.exp(x), t.shape)
        return gw, gt

    return _node(out, (w, t), bw, "expm1_div")


# -- reductions and normalizers ---------------------------------------------


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = tensor(a)
    axes = _norm_axis(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _node(out, (a,), bw, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = tensor(a)
    axes = _norm_axis(axis, a.ndim)
    n = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    return mul(sum_(a, axis, keepdims), 1.0 / n)


def logsumexp(a, axis=-1, keepdims: bool = False) -> Tensor:
    a = tensor(a)
    m = np.max(a.data, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(a.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out_k = np.log(s) + m
    soft = e / s
    out = out_k if keepdims else np.squeeze(out_k, axis=axis)

    def bw(g):
        gk = g if keepdims else np.expand_dims(g, axis)
        return (gk * soft,)

    return _node(out, (a,), bw, "logsumexp")


def log_softmax(a, axis=-1) -> Tensor:
    a = tensor(a)
    m = np.max(a.data, axis=axis, keepdims=True)
    shifted = a.data - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def bw(g):
        return (g - soft * g.sum(axis=axis, keepdims=True),)

    return _node(out, (a,), bw, "log_softmax")


def softmax(a, axis=-1) -> Tensor:
    a = tensor(a)
    m = np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _node(out, (a,), bw, "softmax")


# -- structural ---------------------------------------------------------------


def reshape(a, shape) -> Tensor:
    a = tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} into {tuple(shape)}") from None
    return _node(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def broadcast_to(a, shape) -> Tensor:
    a = tensor(a)
    try:
        out = np.broadcast_to(a.data, shape)
    except ValueError:
        raise ShapeError(f"broadcast_to: cannot broadcast {a.shape} to {tuple(shape)}") from None
    return _node(out, (a,), lambda g: (_unbroadcast(g, a.shape),), "broadcast_to")


def getitem(a, idx) -> Tensor:
    a = tensor(a)
    out = a.data[idx]
    parts = idx if isinstance(idx, tuple) else (idx,)
    basic = all(isinstance(i, (slice, int)) or i is Ellipsis for i in parts)

    def bw(g):
        full = np.zeros_like(a.data)
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return _node(out, (a,), bw, "getitem")


def concat(tensors: Iterable, axis: int = -1) -> Tensor:
    ts = [tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in ts]} on axis {axis}") from None
    ax = axis % out.ndim
    bounds = np.cumsum([0] + [t.shape[ax] for t in ts])

    def bw(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=ax) for i in range(len(ts))
        )

    return _node(out, ts, bw, "concat")


def embedding(table, index) -> Tensor:
    """Row lookup ``table[index]``; equivalent to ``one_hot(index) @ table``."""
    table = tensor(table)
    index = np.asarray(index, dtype=np.int64)
    if index.size and (index.min() < 0 or index.max() >= table.shape[0]):
        raise IndexError(f"embedding: index out of range for table with {table.shape[0]} rows")
    out = table.data[index]

    def bw(g):
        one_hot = index.reshape(-1)[:, None] == np.arange(table.shape[0])[None, :]
        return (one_hot.T.astype(np.float64) @ g.reshape(-1, table.shape[1]),)

    return _node(out, (table,), bw, "embedding")


def take_along_axis(a, index, axis: int = -1) -> Tensor:
    a = tensor(a)
    index = np.asarray(index, dtype=np.int64)
    out = np.take_along_axis(a.data, index, axis=axis)

    def bw(g):
        full = np.zeros_like(a.data)
        if index.shape[axis] == 1:
            np.put_along_axis(full, np.broadcast_to(index, g.shape), g, axis=axis)
        else:
            idx = list(np.indices(index.shape, sparse=True))
            idx[axis % a.ndim] = index
            np.add.at(full, tuple(idx), g)
        return (full,)

    return _node(out, (a,), bw, "take_along_axis")


# -- fused recurrent scan -----------------------------------------------------


def gru_step(x_proj: np.ndarray, h: np.ndarray, U: np.ndarray, b_h: np.ndarray):
    """One GRU update given the precomputed input projection ``x W + b_x``.

    Gate layout along the last axis is ``[reset, update, candidate]``.
    Returns ``(h_new, r, z, n, h_proj)``.
    """
    H = h.shape[-1]
    hp = h @ U + b_h
    r = special.expit(x_proj[..., :H] + hp[..., :H])
    z = special.expit(x_proj[..., H : 2 * H] + hp[..., H : 2 * H])
    n = np.tanh(x_proj[..., 2 * H :] + r * hp[..., 2 * H :])
    return (1.0 - z) * n + z * h, r, z, n, hp


@njit(cache=True, fastmath=True)
def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


@njit(cache=True, fastmath=True)
def _gru_forward(gx, h0, U, b_h):
    B, L, G = gx.shape
    H = G // 3
    states = np.empty((B, L + 1, H))
    r_all = np.empty((L, B, H))
    z_all = np.empty((L, B, H))
    n_all = np.empty((L, B, H))
    hn_all = np.empty((L, B, H))
    h = h0.copy()
    states[:, 0] = h
    for t in range(L):
        hp = np.dot(h, U)
        for b in range(B):
            for j in range(H):
                r = _sigmoid(gx[b, t, j] + hp[b, j] + b_h[j])
                z = _sigmoid(gx[b, t, H + j] + hp[b, H + j] + b_h[H + j])
                hn = hp[b, 2 * H + j] + b_h[2 * H + j]
                n = np.tanh(gx[b, t, 2 * H + j] + r * hn)
                r_all[t, b, j] = r
                z_all[t, b, j] = z
                n_all[t, b, j] = n
                hn_all[t, b, j] = hn
                states[b, t + 1, j] = (1.0 - z) * n + z * h[b, j]
        h = states[:, t + 1].copy()
    return states, r_all, z_all, n_all, hn_all


@njit(cache=True, fastmath=True)
def _gru_backward(g, states, r_all, z_all, n_all, hn_all, U):
    B, P, H = g.shape
    L = P - 1
    dgx = np.zeros((B, L, 3 * H))
    dU = np.zeros((H, 3 * H))
    dbh = np.zeros(3 * H)
    dh = g[:, L].copy()
    dgh = np.empty((B, 3 * H))
    UT = U.T.copy()
    for t in range(L - 1, -1, -1):
        h = states[:, t].copy()
        dh_prev = np.empty((B, H))
        for b in range(B):
            for j in range(H):
                r = r_all[t, b, j]
                z = z_all[t, b, j]
                n = n_all[t, b, j]
                d = dh[b, j]
                dan = d * (1.0 - z) * (1.0 - n * n)
                dar = dan * hn_all[t, b, j] * r * (1.0 - r)
                daz = d * (h[b, j] - n) * z * (1.0 - z)
                dh_prev[b, j] = d * z
                dgx[b, t, j] = dar
                dgx[b, t, H + j] = daz
                dgx[b, t, 2 * H + j] = dan
                dgh[b, j] = dar
                dgh[b, H + j] = daz
                dgh[b, 2 * H + j] = dan * r
        dU += np.dot(h.T, dgh)
        for k in range(3 * H):
            acc = 0.0
            for b in range(B):
                acc += dgh[b, k]
            dbh[k] += acc
        dh = dh_prev + np.dot(dgh, UT) + g[:, t]
    return dgx, dU, dbh, dh


def gru_scan(x, h0, W, U, b_x, b_h) -> Tensor:
    """Run a GRU over ``x`` of shape ``[B, L, I]`` from initial state ``h0``.

    Returns all states, shape ``[B, L + 1, H]``; row 0 is ``h0``. The reverse
    pass is hand-written (backprop through time) so the whole recurrence is a
    single graph node.
    """
    x, h0, W, U, b_x, b_h = (tensor(t) for t in (x, h0, W, U, b_x, b_h))
    B, L, I = x.shape
    H = h0.shape[-1]
    if W.shape != (I, 3 * H) or U.shape != (H, 3 * H) or b_x.shape != (3 * H,) or b_h.shape != (3 * H,):
        raise ShapeError(
            f"gru_scan: x {x.shape}, h0 {h0.shape}, W {W.shape}, U {U.shape}, "
            f"b_x {b_x.shape}, b_h {b_h.shape} are inconsistent"
        )
    gx = np.ascontiguousarray(x.data @ W.data + b_x.data)
    h0b = np.ascontiguousarray(np.broadcast_to(h0.data, (B, H)))
    states, r, z, n, hn = _gru_forward(gx, h0b, np.ascontiguousarray(U.data), b_h.data)

    def bw(g):
        dgx, dU, dbh, dh = _gru_backward(np.ascontiguousarray(g), states, r, z, n, hn, np.ascontiguousarray(U.data))
        flat = dgx.reshape(-1, 3 * H)
        dW = x.data.reshape(-1, I).T @ flat if W.requires_grad else None
        dbx = flat.sum(0)
        dx = dgx @ W.data.T if x.requires_grad else None
        return dx, _unbroadcast(dh, h0.shape), dW, dU, dbx, dbh

    return _node(states, (x, h0, W, U, b_x, b_h), bw, "gru_scan")


# -- parameters ---------------------------------------------------------------


class ParamStore:
    """Named trainable leaves with persistent value and gradient slots."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self) -> list[str]:
        return list(self._params)

    def zero_grad(self):
        for p in self._params.values():
            p.grad = None

    def num_values(self) -> int:
        return sum(p.data.size for p in self._params.values())

    def grads(self) -> dict[str, np.ndarray]:
        return {
            k: (p.grad if p.grad is not None else np.zeros_like(p.data))
            for k, p in self._params.items()
        }

    def state(self) -> dict[str, dict]:
        return {k: {"shape": list(p.shape), "data": p.data.ravel().tolist()} for k, p in self._params.items()}

    def load_state(self, state: dict[str, dict]):
        for k, entry in state.items():
            if k not in self._params:
                raise KeyError(f"unknown parameter {k!r} in checkpoint")
            shape = tuple(entry["shape"])
            if shape != self._params[k].shape:
                raise ShapeError(f"parameter {k!r}: checkpoint shape {shape} != {self._params[k].shape}")
            self._params[k].data = np.array(entry["data"], dtype=np.float64).reshape(shape)
        missing = set(self._params) - set(state)
        if missing:
            raise KeyError(f"checkpoint is missing parameters {sorted(missing)}")

    def copy_values(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self._params.items()}

    def set_values(self, values: dict[str, np.ndarray]):
        for k, v in values.items():
            self._params[k].data = v.copy()


def save_checkpoint(path, params: ParamStore, metadata: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"metadata": metadata, "params": params.state()}, fh)


def read_checkpoint(path) -> tuple[dict, dict]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    return payload["metadata"], payload["params"]


def numerical_grad(f: Callable[[], float], arr: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of ``f`` with respect to ``arr`` (mutated in place)."""
    out = np.zeros_like(arr)
    flat = arr.reshape(-1)
    g = out.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        fp = f()
        flat[i] = old - eps
        fm = f()
        flat[i] = old
        g[i] = (fp - fm) / (2.0 * eps)
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """Max elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic).ravel()
    n = np.asarray(numeric).ravel()
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))
