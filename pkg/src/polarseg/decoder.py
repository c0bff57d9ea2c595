"""Point prompts and a lightweight two-way-attention mask decoder.

The decoder mixes three query tokens (two learned output tokens, one per
mask channel, plus the encoded point prompt) with the image embedding over
`depth` rounds of token self-attention, token-to-image attention, and
image-to-token attention, then upsamples the image path back to input
resolution with stride-2 transposed convolutions. Each output token is run
through its own small MLP and dotted against the upsampled embedding to
produce one logit channel: channel 0 is the disc, channel 1 the cup.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .exceptions import EmptyMaskError, InvalidArgumentError
from .layers import CrossAttention, LayerNorm, Linear, Mlp, Module, MultiHeadAttention
from .tensor import Parameter, Tensor

FOREGROUND = 1
BACKGROUND = 0


@dataclass(frozen=True)
class PointPrompt:
    """A click in polar-image pixel coordinates."""

    px: float
    py: float
    label: int = FOREGROUND

    def __post_init__(self):
        if self.label not in (FOREGROUND, BACKGROUND):
            raise InvalidArgumentError(f"label must be 0 or 1, got {self.label}")


def sample_point_prompt(mask: np.ndarray, rng: np.random.Generator) -> PointPrompt:
    """Uniformly random foreground pixel of a binary mask."""
    ys, xs = np.nonzero(np.asarray(mask))
    if ys.size == 0:
        raise EmptyMaskError("cannot sample a prompt from an empty mask")
    i = int(rng.integers(ys.size))
    return PointPrompt(px=float(xs[i]), py=float(ys[i]), label=FOREGROUND)


class PromptEncoder(Module):
    """Fourier positional features of the click plus a learned label embedding."""

    def __init__(self, dim: int, input_hw: tuple[int, int], rng: np.random.Generator):
        if dim % 2 != 0:
            raise InvalidArgumentError(f"prompt embedding dim must be even, got {dim}")
        self.dim = dim
        self.input_hw = tuple(input_hw)
        self.register_buffer("fourier", rng.normal(0.0, 1.0, size=(2, dim // 2)))
        self.label_embed = Parameter(rng.normal(0.0, 0.02, size=(2, dim)), tag="prompt_encoder")

    def _features(self, coords01: np.ndarray) -> np.ndarray:
        """(..., 2) coordinates in [0, 1] -> (..., dim) sin/cos features."""
        z = (2.0 * coords01 - 1.0) @ self._buffers["fourier"]
        z = 2.0 * np.pi * z
        return np.concatenate([np.sin(z), np.cos(z)], axis=-1)

    def encode_points(self, prompts: list[PointPrompt]) -> Tensor:
        """Batch of prompts -> (B, 1, dim) embeddings."""
        h, w = self.input_hw
        coords = np.empty((len(prompts), 2), dtype=self._buffers["fourier"].dtype)
        onehot = np.zeros((len(prompts), 2), dtype=coords.dtype)
        for i, p in enumerate(prompts):
            if not (0 <= p.px <= w - 1 and 0 <= p.py <= h - 1):
                raise InvalidArgumentError(
                    f"prompt ({p.px}, {p.py}) outside polar image bounds {h}x{w}")
            coords[i] = (p.px / (w - 1), p.py / (h - 1))
            onehot[i, p.label] = 1.0
        feats = Tensor(self._features(coords))
        emb = feats + T.matmul(Tensor(onehot), self.label_embed)
        return T.reshape(emb, (len(prompts), 1, self.dim))

    def encode_prompt(self, prompt: PointPrompt) -> Tensor:
        return self.encode_points([prompt])

    def dense_grid(self, h: int, w: int) -> np.ndarray:
        """Positional features for token-grid cell centers, shape (h, w, dim)."""
        ys = (np.arange(h) + 0.5) / h
        xs = (np.arange(w) + 0.5) / w
        coords = np.stack(np.meshgrid(xs, ys, indexing="xy"), axis=-1)  # (h, w, 2) as (x, y)
        return self._features(coords)


class TwoWayBlock(Module):
    """One round of token self-attention, token->image, MLP, and image->token attention."""

    def __init__(self, dim: int, num_heads: int, mlp_ratio: float, rng: np.random.Generator):
        self.self_attn = MultiHeadAttention(dim, num_heads, rng, tag="mask_decoder")
        self.norm1 = LayerNorm(dim, tag="mask_decoder")
        self.cross_t2i = CrossAttention(dim, num_heads, rng, tag="mask_decoder")
        self.norm2 = LayerNorm(dim, tag="mask_decoder")
        self.mlp = Mlp(dim, int(dim * mlp_ratio), rng, tag="mask_decoder")
        self.norm3 = LayerNorm(dim, tag="mask_decoder")
        self.cross_i2t = CrossAttention(dim, num_heads, rng, tag="mask_decoder")
        self.norm4 = LayerNorm(dim, tag="mask_decoder")

    def __call__(self, tokens: Tensor, image: Tensor):
        tokens = self.norm1(tokens + self.self_attn(tokens))
        tokens = self.norm2(tokens + self.cross_t2i(tokens, image))
        tokens = self.norm3(tokens + self.mlp(tokens))
        image = self.norm4(image + self.cross_i2t(image, tokens))
        return tokens, image


class MaskDecoder(Module):
    def __init__(self, dim: int, token_grid: int, upscale_stages: int,
                 rng: np.random.Generator, depth: int = 2, num_heads: int = 4,
                 mlp_ratio: float = 2.0):
        if dim % num_heads != 0:
            raise InvalidArgumentError(f"decoder dim {dim} not divisible by heads {num_heads}")
        self.dim = dim
        self.token_grid = token_grid
        self.output_tokens = Parameter(rng.normal(0.0, 0.02, size=(2, dim)), tag="mask_decoder")
        self.blocks = [TwoWayBlock(dim, num_heads, mlp_ratio, rng) for _ in range(depth)]

        channels = [dim]
        for _ in range(upscale_stages):
            channels.append(max(channels[-1] // 2, 4))
        self.up_w = [Parameter(rng.normal(0.0, 0.02, size=(2, 2, channels[i], channels[i + 1])),
                               tag="mask_decoder") for i in range(upscale_stages)]
        self.up_b = [Parameter(np.zeros(channels[i + 1]), tag="mask_decoder")
                     for i in range(upscale_stages)]
        self.up_norms = [LayerNorm(channels[i + 1], tag="mask_decoder")
                         for i in range(upscale_stages - 1)]
        self.final_channels = channels[-1]
        self.hyper = [Mlp(dim, dim, rng, tag="mask_decoder") for _ in range(2)]
        self.hyper_out = [Linear(dim, self.final_channels, rng, tag="mask_decoder")
                          for _ in range(2)]
        self.mask_bias = Parameter(np.zeros(2), tag="mask_decoder")

    def __call__(self, image_embedding: Tensor, prompt_embedding: Tensor,
                 dense_pe: np.ndarray) -> Tensor:
        """(B, h, w, dim) embedding + (B, 1, dim) prompt -> (B, H, W, 2) logits."""
        B, h, w, dim = image_embedding.shape
        if dim != self.dim or h != self.token_grid or w != self.token_grid:
            raise InvalidArgumentError(
                f"embedding grid {h}x{w}x{dim} does not match decoder "
                f"({self.token_grid}x{self.token_grid}x{self.dim})")
        if prompt_embedding.shape[0] != B or prompt_embedding.shape[-1] != dim:
            raise InvalidArgumentError(
                f"prompt embedding shape {prompt_embedding.shape} incompatible with batch {B}")
        image = T.reshape(image_embedding + Tensor(dense_pe[None]), (B, h * w, dim))
        base = T.reshape(self.output_tokens, (1, 2, dim)) + Tensor(
            np.zeros((B, 1, 1), dtype=image_embedding.dtype))
        tokens = T.concat([base, prompt_embedding], axis=1)  # (B, 3, dim)
        for block in self.blocks:
            tokens, image = block(tokens, image)

        x = T.reshape(image, (B, h, w, dim))
        for i, (wgt, bias) in enumerate(zip(self.up_w, self.up_b)):
            x = T.conv_transpose_2x(x, wgt, bias)
            if i < len(self.up_norms):
                x = T.gelu(self.up_norms[i](x))
        H = h * (2 ** len(self.up_w))
        flat = T.reshape(x, (B, H * H, self.final_channels))

        channels = []
        for i in range(2):
            weights = self.hyper_out[i](self.hyper[i](tokens[:, i:i + 1, :]))  # (B, 1, cf)
            logit = T.matmul(flat, T.transpose(weights, (0, 2, 1)))  # (B, H*H, 1)
            logit = logit + self.mask_bias[i:i + 1]
            channels.append(T.reshape(logit, (B, H, H, 1)))
        return T.concat(channels, axis=3)
