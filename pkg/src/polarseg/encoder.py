"""Transformer image encoder with per-block bottleneck adapters.

Sixteen blocks by default: twelve attend within local windows, four attend
globally. Every block carries two adapters, one after the attention residual
and one after the feed-forward residual. With zero-initialized up
projections the adapters are exact identities, so a freshly adapted encoder
reproduces the base encoder until training moves the adapter weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .exceptions import InvalidArgumentError
from .layers import LayerNorm, Linear, Mlp, Module, MultiHeadAttention
from .tensor import Parameter, Tensor

ACTIVATIONS = {"gelu": T.gelu, "relu": T.relu, "identity": lambda x: x}


@dataclass(frozen=True)
class EncoderConfig:
    image_size: int = 256
    patch_size: int = 16
    embed_dim: int = 192
    depth: int = 16
    num_heads: int = 6
    window_size: int = 8
    global_block_indices: tuple[int, ...] = (3, 7, 11, 15)
    mlp_ratio: float = 4.0
    in_channels: int = 3
    neck_dim: int = 128

    def __post_init__(self):
        if self.image_size % self.patch_size != 0:
            raise InvalidArgumentError(
                f"image_size {self.image_size} not divisible by patch_size {self.patch_size}")
        if self.patch_size & (self.patch_size - 1) != 0:
            raise InvalidArgumentError(
                f"patch_size must be a power of two for mask upsampling, got {self.patch_size}")
        if self.embed_dim % self.num_heads != 0:
            raise InvalidArgumentError(
                f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}")
        if self.depth < 1 or self.window_size < 1:
            raise InvalidArgumentError("depth and window_size must be >= 1")
        bad = [i for i in self.global_block_indices if not 0 <= i < self.depth]
        if bad:
            raise InvalidArgumentError(f"global block indices out of range: {bad}")

    @property
    def tokens_per_side(self) -> int:
        return self.image_size // self.patch_size


@dataclass(frozen=True)
class AdapterConfig:
    """Bottleneck adapter: down projection, activation, up projection, scaled residual."""

    bottleneck_dim: int | None = None  # overrides bottleneck_ratio when set
    bottleneck_ratio: float = 0.25
    activation: str = "gelu"
    residual_scale: float = 1.0
    up_projection_init: str = "zero"  # "zero" | "small-random"

    def __post_init__(self):
        if self.bottleneck_dim is not None and self.bottleneck_dim < 1:
            raise InvalidArgumentError(f"bottleneck_dim must be >= 1, got {self.bottleneck_dim}")
        if self.bottleneck_dim is None and not 0.0 < self.bottleneck_ratio:
            raise InvalidArgumentError(f"bottleneck_ratio must be > 0, got {self.bottleneck_ratio}")
        if self.activation not in ACTIVATIONS:
            raise InvalidArgumentError(
                f"activation must be one of {sorted(ACTIVATIONS)}, got {self.activation!r}")
        if not math.isfinite(self.residual_scale):
            raise InvalidArgumentError("residual_scale must be finite")
        if self.up_projection_init not in ("zero", "small-random"):
            raise InvalidArgumentError(f"unknown up_projection_init {self.up_projection_init!r}")

    def resolve_bottleneck(self, dim: int) -> int:
        if self.bottleneck_dim is not None:
            return self.bottleneck_dim
        return max(1, int(round(dim * self.bottleneck_ratio)))


class Adapter(Module):
    def __init__(self, dim: int, cfg: AdapterConfig, rng: np.random.Generator):
        bottleneck = cfg.resolve_bottleneck(dim)
        self.down = Linear(dim, bottleneck, rng, tag="adapter")
        self.up = Linear(bottleneck, dim, rng, tag="adapter",
                         std=0.001, zero_init=cfg.up_projection_init == "zero")
        self.act = ACTIVATIONS[cfg.activation]
        self.scale = cfg.residual_scale

    def __call__(self, x: Tensor) -> Tensor:
        return x + self.scale * self.up(self.act(self.down(x)))


def window_partition(x: Tensor, window: int):
    """(B, H, W, d) -> (B*nWindows, window*window, d); pads bottom/right with zeros."""
    B, H, W, d = x.shape
    pad_h = (-H) % window
    pad_w = (-W) % window
    if pad_h or pad_w:
        x = T.pad_zeros(x, ((0, 0), (0, pad_h), (0, pad_w), (0, 0)))
    Hp, Wp = H + pad_h, W + pad_w
    x = T.reshape(x, (B, Hp // window, window, Wp // window, window, d))
    x = T.transpose(x, (0, 1, 3, 2, 4, 5))
    return T.reshape(x, (-1, window * window, d)), (Hp, Wp)


def window_unpartition(windows: Tensor, window: int, padded_hw, hw) -> Tensor:
    """Inverse of :func:`window_partition`, removing any padding."""
    Hp, Wp = padded_hw
    H, W = hw
    d = windows.shape[-1]
    B = windows.shape[0] // ((Hp // window) * (Wp // window))
    x = T.reshape(windows, (B, Hp // window, Wp // window, window, window, d))
    x = T.transpose(x, (0, 1, 3, 2, 4, 5))
    x = T.reshape(x, (B, Hp, Wp, d))
    if Hp > H or Wp > W:
        x = x[:, :H, :W, :]
    return x


class TransformerBlock(Module):
    """Pre-norm attention + MLP block; window_size 0 means global attention."""

    def __init__(self, dim: int, num_heads: int, mlp_ratio: float, window_size: int,
                 rng: np.random.Generator,
                 adapter_cfg: AdapterConfig | None, adapter_rng: np.random.Generator | None):
        self.window_size = window_size
        self.norm1 = LayerNorm(dim, tag="base_encoder")
        self.attn = MultiHeadAttention(dim, num_heads, rng, tag="base_encoder")
        self.norm2 = LayerNorm(dim, tag="base_encoder")
        self.mlp = Mlp(dim, int(dim * mlp_ratio), rng, tag="base_encoder")
        self.adapter_attn = Adapter(dim, adapter_cfg, adapter_rng) if adapter_cfg else None
        self.adapter_mlp = Adapter(dim, adapter_cfg, adapter_rng) if adapter_cfg else None

    def __call__(self, x: Tensor) -> Tensor:
        B, H, W, d = x.shape
        y = self.norm1(x)
        if self.window_size > 0:
            windows, padded = window_partition(y, self.window_size)
            attended = self.attn(windows)
            y = window_unpartition(attended, self.window_size, padded, (H, W))
        else:
            y = T.reshape(self.attn(T.reshape(y, (B, H * W, d))), (B, H, W, d))
        x = x + y
        if self.adapter_attn is not None:
            x = self.adapter_attn(x)
        x = x + self.mlp(self.norm2(x))
        if self.adapter_mlp is not None:
            x = self.adapter_mlp(x)
        return x


class PatchEmbed(Module):
    """Linear projection of non-overlapping patches plus a learned position grid."""

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        side = cfg.tokens_per_side
        in_dim = cfg.patch_size * cfg.patch_size * cfg.in_channels
        self.patch = cfg.patch_size
        self.proj = Linear(in_dim, cfg.embed_dim, rng, tag="base_encoder")
        self.pos = Parameter(rng.normal(0.0, 0.02, size=(1, side, side, cfg.embed_dim)),
                             tag="base_encoder")

    def __call__(self, img: Tensor) -> Tensor:
        B, H, W, C = img.shape
        p = self.patch
        if H % p or W % p:
            raise InvalidArgumentError(f"image {H}x{W} not divisible by patch size {p}")
        x = T.reshape(img, (B, H // p, p, W // p, p, C))
        x = T.transpose(x, (0, 1, 3, 2, 4, 5))
        x = T.reshape(x, (B, H // p, W // p, p * p * C))
        return self.proj(x) + self.pos


class ViTEncoder(Module):
    """Patch embedding, `depth` transformer blocks, then a neck projection.

    Attention gates (see :mod:`polarseg.cbam`) can be installed at the front
    (after patch embedding) and back (after the final block); `cbam_bypass`
    switches them off without removing their parameters.
    """

    def __init__(self, cfg: EncoderConfig, adapter_cfg: AdapterConfig | None,
                 rng: np.random.Generator, adapter_rng: np.random.Generator | None = None):
        if adapter_cfg is not None and adapter_rng is None:
            raise InvalidArgumentError("adapter_cfg requires adapter_rng")
        self.cfg = cfg
        self.adapter_cfg = adapter_cfg
        self.patch_embed = PatchEmbed(cfg, rng)
        self.blocks = [
            TransformerBlock(
                cfg.embed_dim, cfg.num_heads, cfg.mlp_ratio,
                window_size=0 if i in cfg.global_block_indices else cfg.window_size,
                rng=rng, adapter_cfg=adapter_cfg, adapter_rng=adapter_rng)
            for i in range(cfg.depth)
        ]
        self.neck = Linear(cfg.embed_dim, cfg.neck_dim, rng, tag="base_encoder")
        self.neck_norm = LayerNorm(cfg.neck_dim, tag="base_encoder")
        self.spatial_attn = None
        self.channel_attn = None
        self.cbam_bypass = False

    def encode(self, img) -> Tensor:
        """(B, S, S, C) image batch -> (B, S/p, S/p, neck_dim) embedding grid."""
        if not isinstance(img, Tensor):
            img = Tensor(np.asarray(img))
        if img.ndim != 4 or img.shape[1] != self.cfg.image_size or img.shape[2] != self.cfg.image_size:
            raise InvalidArgumentError(
                f"expected (B, {self.cfg.image_size}, {self.cfg.image_size}, C) input, got {img.shape}")
        gates_on = not self.cbam_bypass
        if gates_on and self.spatial_attn is not None and self.spatial_attn.on_pixels:
            img = self.spatial_attn(img)
        x = self.patch_embed(img)
        if gates_on and self.spatial_attn is not None and not self.spatial_attn.on_pixels:
            x = self.spatial_attn(x)
        for block in self.blocks:
            x = block(x)
        if gates_on and self.channel_attn is not None:
            x = self.channel_attn(x)
        return self.neck_norm(self.neck(x))

    __call__ = encode
