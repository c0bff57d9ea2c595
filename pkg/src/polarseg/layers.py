"""Module base class and the shared neural layers."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Parameter, Tensor


class Module:
    """Container of parameters, buffers, and submodules.

    Attribute assignment is enough to register: `Parameter` values become
    trainable leaves, nested `Module`s (also inside lists) contribute their
    own parameters under a dotted prefix, and arrays passed through
    `register_buffer` are saved with checkpoints but never trained.
    """

    def register_buffer(self, name: str, value: np.ndarray):
        if not hasattr(self, "_buffers"):
            object.__setattr__(self, "_buffers", {})
        self._buffers[name] = np.asarray(value)

    def named_parameters(self, prefix: str = ""):
        for key, value in vars(self).items():
            if key == "_buffers":
                continue
            if isinstance(value, Parameter):
                yield prefix + key, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{key}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Parameter):
                        yield f"{prefix}{key}.{i}", item
                    elif isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{key}.{i}.")

    def named_modules(self, prefix: str = ""):
        yield prefix, self
        for key, value in vars(self).items():
            if key == "_buffers":
                continue
            if isinstance(value, Module):
                yield from value.named_modules(f"{prefix}{key}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_modules(f"{prefix}{key}.{i}.")

    def named_buffers(self, prefix: str = ""):
        for mod_prefix, mod in self.named_modules(prefix):
            for name, value in getattr(mod, "_buffers", {}).items():
                yield mod_prefix + name, value

    def cast(self, dtype):
        """Cast all parameters and buffers in place (float32 training, float64 checks)."""
        for _, p in self.named_parameters():
            p.data = p.data.astype(dtype)
        for _, mod in self.named_modules():
            buffers = getattr(mod, "_buffers", None)
            if buffers:
                for k in buffers:
                    buffers[k] = buffers[k].astype(dtype)
        return self

    def zero_grad(self):
        for _, p in self.named_parameters():
            p.grad = None


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, tag: str,
                 std: float = 0.02, zero_init: bool = False):
        if zero_init:
            w = np.zeros((in_dim, out_dim))
        else:
            w = rng.normal(0.0, std, size=(in_dim, out_dim))
        self.w = Parameter(w, tag=tag)
        self.b = Parameter(np.zeros(out_dim), tag=tag)

    def __call__(self, x: Tensor) -> Tensor:
        return T.linear(x, self.w, self.b)


class LayerNorm(Module):
    def __init__(self, dim: int, tag: str, eps: float = 1e-6):
        self.gamma = Parameter(np.ones(dim), tag=tag)
        self.beta = Parameter(np.zeros(dim), tag=tag)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gamma, self.beta, eps=self.eps)


class Mlp(Module):
    """Two-layer feed-forward block with GELU."""

    def __init__(self, dim: int, hidden: int, rng: np.random.Generator, tag: str):
        self.fc1 = Linear(dim, hidden, rng, tag)
        self.fc2 = Linear(hidden, dim, rng, tag)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(T.gelu(self.fc1(x)))


class MultiHeadAttention(Module):
    """Standard multi-head self-attention over (B, N, dim) token sequences."""

    def __init__(self, dim: int, num_heads: int, rng: np.random.Generator, tag: str):
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.scale = self.head_dim ** -0.5
        self.qkv = Linear(dim, 3 * dim, rng, tag)
        self.proj = Linear(dim, dim, rng, tag)

    def __call__(self, x: Tensor) -> Tensor:
        B, N, dim = x.shape
        qkv = T.reshape(self.qkv(x), (B, N, 3, self.num_heads, self.head_dim))
        qkv = T.transpose(qkv, (2, 0, 3, 1, 4))  # (3, B, heads, N, head_dim)
        q, k, v = qkv[0], qkv[1], qkv[2]
        attn = T.softmax(T.matmul(q, T.transpose(k, (0, 1, 3, 2))) * self.scale)
        out = T.matmul(attn, v)  # (B, heads, N, head_dim)
        out = T.reshape(T.transpose(out, (0, 2, 1, 3)), (B, N, dim))
        return self.proj(out)


class CrossAttention(Module):
    """Multi-head attention where queries and key/values come from different sequences."""

    def __init__(self, dim: int, num_heads: int, rng: np.random.Generator, tag: str):
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.scale = self.head_dim ** -0.5
        self.wq = Linear(dim, dim, rng, tag)
        self.wk = Linear(dim, dim, rng, tag)
        self.wv = Linear(dim, dim, rng, tag)
        self.proj = Linear(dim, dim, rng, tag)

    def _split(self, x: Tensor) -> Tensor:
        B, N, _ = x.shape
        return T.transpose(T.reshape(x, (B, N, self.num_heads, self.head_dim)), (0, 2, 1, 3))

    def __call__(self, queries: Tensor, keys: Tensor) -> Tensor:
        B, Nq, dim = queries.shape
        q = self._split(self.wq(queries))
        k = self._split(self.wk(keys))
        v = self._split(self.wv(keys))
        attn = T.softmax(T.matmul(q, T.transpose(k, (0, 1, 3, 2))) * self.scale)
        out = T.matmul(attn, v)
        out = T.reshape(T.transpose(out, (0, 2, 1, 3)), (B, Nq, dim))
        return self.proj(out)
