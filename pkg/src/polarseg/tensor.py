"""Reverse-mode automatic differentiation over numpy arrays.

A `Tensor` wraps an ndarray and, while gradients are enabled, remembers how
it was produced: a tuple of parent tensors and one backward closure per
parent. `backward()` walks the graph in reverse topological order and
accumulates gradients into every leaf that has `requires_grad` set.

Only the operations this package needs are implemented. Each op keeps the
forward path a plain numpy expression so float32 training and float64
gradient checking run through identical code.
"""

from __future__ import annotations

import contextlib
from typing import Sequence

import numpy as np

from .exceptions import InvalidArgumentError

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction (inference mode)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjps")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents: tuple = ()
        self._vjps: tuple = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # -- operators ---------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take_slice(self, key)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)

    def backward(self):
        """Accumulate gradients of this (scalar) tensor w.r.t. all leaves."""
        if self.data.size != 1:
            raise InvalidArgumentError("backward() requires a scalar tensor")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, vjp in zip(node._parents, node._vjps):
                if vjp is None or not parent.requires_grad:
                    continue
                contrib = vjp(g)
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + contrib
                else:
                    grads[key] = contrib
            # leaves with explicit parents do not occur; nothing else to do
        # non-leaf tensors the caller holds may also want .grad (rare); skip


class Parameter(Tensor):
    """Trainable leaf tensor carrying a partition tag."""

    __slots__ = ("tag",)

    def __init__(self, data, tag: str):
        super().__init__(np.asarray(data), requires_grad=True)
        self.tag = tag


def _wrap(x, ref_dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if ref_dtype is not None and isinstance(x, (int, float)):
        # keep python scalars from promoting float32 graphs to float64
        return Tensor(np.asarray(x, dtype=ref_dtype))
    return Tensor(np.asarray(x))


def _node(data, parents: Sequence[Tensor], vjps: Sequence) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjps = tuple(vjps)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient back down to `shape` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


# -- arithmetic --------------------------------------------------------------

def add(a, b) -> Tensor:
    a = _wrap(a, ref_dtype=b.dtype if isinstance(b, Tensor) else None)
    b = _wrap(b, ref_dtype=a.dtype)
    return _node(a.data + b.data, (a, b),
                 (lambda g: _unbroadcast(g, a.data.shape),
                  lambda g: _unbroadcast(g, b.data.shape)))


def sub(a, b) -> Tensor:
    a = _wrap(a, ref_dtype=b.dtype if isinstance(b, Tensor) else None)
    b = _wrap(b, ref_dtype=a.dtype)
    return _node(a.data - b.data, (a, b),
                 (lambda g: _unbroadcast(g, a.data.shape),
                  lambda g: _unbroadcast(-g, b.data.shape)))


def mul(a, b) -> Tensor:
    a = _wrap(a, ref_dtype=b.dtype if isinstance(b, Tensor) else None)
    b = _wrap(b, ref_dtype=a.dtype)
    return _node(a.data * b.data, (a, b),
                 (lambda g: _unbroadcast(g * b.data, a.data.shape),
                  lambda g: _unbroadcast(g * a.data, b.data.shape)))


def div(a, b) -> Tensor:
    a = _wrap(a, ref_dtype=b.dtype if isinstance(b, Tensor) else None)
    b = _wrap(b, ref_dtype=a.dtype)
    return _node(a.data / b.data, (a, b),
                 (lambda g: _unbroadcast(g / b.data, a.data.shape),
                  lambda g: _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)))


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return _node(np.matmul(a.data, b.data), (a, b),
                 (lambda g: _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.data.shape),
                  lambda g: _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.data.shape)))


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """y = x @ w (+ b) over the last axis; folds leading axes into one GEMM."""
    x, w = _wrap(x), _wrap(w)
    lead = x.data.shape[:-1]
    x2 = x.data.reshape(-1, x.data.shape[-1])
    y2 = x2 @ w.data
    if b is not None:
        y2 = y2 + b.data
    out_shape = lead + (w.data.shape[-1],)

    def dx(g):
        return (g.reshape(-1, g.shape[-1]) @ w.data.T).reshape(x.data.shape)

    def dw(g):
        return x2.T @ g.reshape(-1, g.shape[-1])

    parents = [x, w]
    vjps = [dx, dw]
    if b is not None:
        parents.append(b)
        vjps.append(lambda g: g.reshape(-1, g.shape[-1]).sum(axis=0))
    return _node(y2.reshape(out_shape), parents, vjps)


# -- shape ops ---------------------------------------------------------------

def reshape(x: Tensor, shape) -> Tensor:
    x = _wrap(x)
    return _node(x.data.reshape(shape), (x,),
                 (lambda g: g.reshape(x.data.shape),))


def transpose(x: Tensor, axes) -> Tensor:
    x = _wrap(x)
    inv = np.argsort(axes)
    return _node(np.transpose(x.data, axes), (x,),
                 (lambda g: np.transpose(g, inv),))


def take_slice(x: Tensor, key) -> Tensor:
    x = _wrap(x)

    def vjp(g):
        out = np.zeros_like(x.data)
        out[key] = g
        return out

    return _node(x.data[key], (x,), (vjp,))


def pad_zeros(x: Tensor, pad_width) -> Tensor:
    """Zero padding; pad_width follows np.pad convention."""
    x = _wrap(x)
    sl = tuple(slice(p[0], p[0] + n) for p, n in zip(pad_width, x.data.shape))
    return _node(np.pad(x.data, pad_width), (x,), (lambda g: g[sl],))


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def make_vjp(i):
        sl = [slice(None)] * tensors[i].data.ndim
        sl[axis] = slice(int(offsets[i]), int(offsets[i + 1]))
        sl = tuple(sl)
        return lambda g: g[sl]

    return _node(np.concatenate([t.data for t in tensors], axis=axis),
                 tuple(tensors), tuple(make_vjp(i) for i in range(len(tensors))))


# -- reductions ---------------------------------------------------------------

def _restore_axes(g, axis, keepdims, in_shape):
    if keepdims or axis is None:
        return np.broadcast_to(g.reshape([1] * len(in_shape)) if axis is None and not keepdims else g,
                               in_shape)
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    g = np.expand_dims(g, axes)
    return np.broadcast_to(g, in_shape)


def reduce_sum(x: Tensor, axis=None, keepdims=False) -> Tensor:
    x = _wrap(x)
    return _node(x.data.sum(axis=axis, keepdims=keepdims), (x,),
                 (lambda g: _restore_axes(g, axis, keepdims, x.data.shape).astype(x.data.dtype, copy=False),))


def reduce_mean(x: Tensor, axis=None, keepdims=False) -> Tensor:
    x = _wrap(x)
    y = x.data.mean(axis=axis, keepdims=keepdims)
    count = x.data.size / y.size

    def vjp(g):
        return (_restore_axes(g, axis, keepdims, x.data.shape) / count).astype(x.data.dtype, copy=False)

    return _node(y, (x,), (vjp,))


def reduce_max(x: Tensor, axis: int, keepdims=False) -> Tensor:
    """Max over one axis; gradient routes to the first argmax (ties broken low)."""
    x = _wrap(x)
    y = x.data.max(axis=axis, keepdims=keepdims)
    idx = np.expand_dims(x.data.argmax(axis=axis), axis)

    def vjp(g):
        out = np.zeros_like(x.data)
        g_exp = g if keepdims else np.expand_dims(g, axis)
        np.put_along_axis(out, idx, g_exp, axis=axis)
        return out

    return _node(y, (x,), (vjp,))


# -- nonlinearities ------------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    x = _wrap(x)
    mask = x.data > 0
    return _node(np.where(mask, x.data, 0), (x,), (lambda g: g * mask,))


_GELU_SLOPE = 1.702  # sigmoid-gated GELU: x * sigmoid(1.702 x)


def gelu(x: Tensor) -> Tensor:
    """Gaussian error linear unit, sigmoid-gated form (fast and smooth)."""
    x = _wrap(x)
    z = _GELU_SLOPE * x.data
    s = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                 np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
    y = x.data * s

    def vjp(g):
        return g * (s + y * _GELU_SLOPE * (1.0 - s))

    return _node(y, (x,), (vjp,))


def sigmoid(x: Tensor) -> Tensor:
    x = _wrap(x)
    s = np.where(x.data >= 0,
                 1.0 / (1.0 + np.exp(-np.abs(x.data))),
                 np.exp(-np.abs(x.data)) / (1.0 + np.exp(-np.abs(x.data))))
    return _node(s, (x,), (lambda g: g * s * (1.0 - s),))


def log(x: Tensor) -> Tensor:
    x = _wrap(x)
    return _node(np.log(x.data), (x,), (lambda g: g / x.data,))


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp; gradient passes only where the input was strictly inside [lo, hi]."""
    x = _wrap(x)
    mask = (x.data >= lo) & (x.data <= hi)
    return _node(np.clip(x.data, lo, hi), (x,), (lambda g: g * mask,))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = _wrap(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return p * (g - (g * p).sum(axis=axis, keepdims=True))

    return _node(p, (x,), (vjp,))


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    x, gamma, beta = _wrap(x), _wrap(gamma), _wrap(beta)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    y = xhat * gamma.data + beta.data
    d = x.data.shape[-1]

    def dx(g):
        gg = g * gamma.data
        return inv * (gg - gg.mean(axis=-1, keepdims=True)
                      - xhat * (gg * xhat).mean(axis=-1, keepdims=True))

    def dgamma(g):
        return (g * xhat).reshape(-1, d).sum(axis=0)

    def dbeta(g):
        return g.reshape(-1, d).sum(axis=0)

    return _node(y, (x, gamma, beta), (dx, dgamma, dbeta))


# -- convolutions ---------------------------------------------------------------

def conv2d_same(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """2D convolution, stride 1, zero 'same' padding.

    x: (B, H, W, Cin); w: (kh, kw, Cin, Cout) with odd kh, kw.
    """
    x, w = _wrap(x), _wrap(w)
    kh, kw, cin, cout = w.data.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise InvalidArgumentError("conv2d_same requires odd kernel sizes")
    B, H, W, _ = x.data.shape
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    y = np.zeros((B, H, W, cout), dtype=x.data.dtype)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, i:i + H, j:j + W, :].reshape(-1, cin)
            y += (patch @ w.data[i, j]).reshape(B, H, W, cout)
    if b is not None:
        y = y + b.data

    def dx(g):
        gp = np.zeros_like(xp)
        g2 = g.reshape(-1, cout)
        for i in range(kh):
            for j in range(kw):
                gp[:, i:i + H, j:j + W, :] += (g2 @ w.data[i, j].T).reshape(B, H, W, cin)
        return gp[:, ph:ph + H, pw:pw + W, :]

    def dw(g):
        g2 = g.reshape(-1, cout)
        out = np.empty_like(w.data)
        for i in range(kh):
            for j in range(kw):
                patch = xp[:, i:i + H, j:j + W, :].reshape(-1, cin)
                out[i, j] = patch.T @ g2
        return out

    parents = [x, w]
    vjps = [dx, dw]
    if b is not None:
        parents.append(b)
        vjps.append(lambda g: g.reshape(-1, cout).sum(axis=0))
    return _node(y, parents, vjps)


def conv_transpose_2x(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Transposed convolution, kernel 2, stride 2 (doubles spatial size).

    x: (B, H, W, Cin); w: (2, 2, Cin, Cout) -> (B, 2H, 2W, Cout).
    """
    x, w = _wrap(x), _wrap(w)
    B, H, W, cin = x.data.shape
    cout = w.data.shape[-1]
    x2 = x.data.reshape(-1, cin)
    y = np.empty((B, 2 * H, 2 * W, cout), dtype=x.data.dtype)
    for di in range(2):
        for dj in range(2):
            y[:, di::2, dj::2, :] = (x2 @ w.data[di, dj]).reshape(B, H, W, cout)
    if b is not None:
        y = y + b.data

    def dx(g):
        out = np.zeros_like(x.data)
        for di in range(2):
            for dj in range(2):
                out += (g[:, di::2, dj::2, :].reshape(-1, cout) @ w.data[di, dj].T).reshape(B, H, W, cin)
        return out

    def dw(g):
        out = np.empty_like(w.data)
        for di in range(2):
            for dj in range(2):
                out[di, dj] = x2.T @ g[:, di::2, dj::2, :].reshape(-1, cout)
        return out

    parents = [x, w]
    vjps = [dx, dw]
    if b is not None:
        parents.append(b)
        vjps.append(lambda g: g.reshape(-1, cout).sum(axis=0))
    return _node(y, parents, vjps)
