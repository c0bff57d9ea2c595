"""Split convolutional block attention: a spatial gate at the encoder front
end and a channel gate at the back end.

The spatial gate convolves the channelwise [max; mean] summary and multiplies
the feature map by a sigmoid field; the channel gate pools spatially (average
and max through a shared bottleneck MLP) and reweights channels. Both gates
stay strictly inside (0, 1), so they only ever attenuate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .exceptions import InvalidArgumentError, InvalidStateError
from .layers import Linear, Module
from .tensor import Parameter, Tensor

# pre-sigmoid constant used by the forced-open test mode: sigmoid(40) == 1 - 4e-18
_FORCE_OPEN_LOGIT = 40.0


@dataclass(frozen=True)
class SpatialAttnConfig:
    conv_kernel: int = 7
    on_pixels: bool = False  # gate the raw image instead of the embedded token grid

    def __post_init__(self):
        if self.conv_kernel < 3 or self.conv_kernel % 2 == 0:
            raise InvalidArgumentError(f"conv_kernel must be odd and >= 3, got {self.conv_kernel}")


@dataclass(frozen=True)
class ChannelAttnConfig:
    reduction_ratio: int = 16

    def __post_init__(self):
        if self.reduction_ratio < 1:
            raise InvalidArgumentError(f"reduction_ratio must be >= 1, got {self.reduction_ratio}")

    def hidden_dim(self, channels: int) -> int:
        return max(1, channels // self.reduction_ratio)


class SpatialAttention(Module):
    def __init__(self, cfg: SpatialAttnConfig, rng: np.random.Generator):
        k = cfg.conv_kernel
        self.on_pixels = cfg.on_pixels
        self.conv_w = Parameter(rng.normal(0.0, 0.02, size=(k, k, 2, 1)), tag="cbam")
        self.conv_b = Parameter(np.zeros(1), tag="cbam")
        self.force_open = False

    def gate(self, f: Tensor) -> Tensor:
        mx = T.reduce_max(f, axis=3, keepdims=True)
        mn = f.mean(axis=3, keepdims=True)
        logit = T.conv2d_same(T.concat([mx, mn], axis=3), self.conv_w, self.conv_b)
        if self.force_open:
            logit = Tensor(np.full_like(logit.data, _FORCE_OPEN_LOGIT))
        return T.sigmoid(logit)

    def __call__(self, f: Tensor) -> Tensor:
        return f * self.gate(f)


class ChannelAttention(Module):
    def __init__(self, channels: int, cfg: ChannelAttnConfig, rng: np.random.Generator):
        hidden = cfg.hidden_dim(channels)
        self.fc1 = Linear(channels, hidden, rng, tag="cbam")
        self.fc2 = Linear(hidden, channels, rng, tag="cbam")
        self.force_open = False

    def _mlp(self, pooled: Tensor) -> Tensor:
        return self.fc2(T.relu(self.fc1(pooled)))

    def gate(self, f: Tensor) -> Tensor:
        avg = f.mean(axis=(1, 2))  # (B, C)
        mx = T.reduce_max(T.reduce_max(f, axis=1), axis=1)
        logit = self._mlp(avg) + self._mlp(mx)
        if self.force_open:
            logit = Tensor(np.full_like(logit.data, _FORCE_OPEN_LOGIT))
        B, C = logit.shape
        return T.reshape(T.sigmoid(logit), (B, 1, 1, C))

    def __call__(self, f: Tensor) -> Tensor:
        return f * self.gate(f)


def install_hooks(encoder, spatial_cfg: SpatialAttnConfig | None = None,
                  channel_cfg: ChannelAttnConfig | None = None,
                  rng: np.random.Generator | None = None):
    """Attach the spatial gate at the encoder front end and the channel gate
    at the back end (before the neck). Raises if hooks are already installed."""
    if encoder.spatial_attn is not None or encoder.channel_attn is not None:
        raise InvalidStateError("attention hooks are already installed on this encoder")
    spatial_cfg = spatial_cfg or SpatialAttnConfig()
    channel_cfg = channel_cfg or ChannelAttnConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    encoder.spatial_attn = SpatialAttention(spatial_cfg, rng)
    encoder.channel_attn = ChannelAttention(encoder.cfg.embed_dim, channel_cfg, rng)
    return encoder


def set_force_open(encoder, flag: bool):
    """Test mode: drive both gate logits to +40 so the gates are 1 up to 4e-18."""
    if encoder.spatial_attn is None or encoder.channel_attn is None:
        raise InvalidStateError("no attention hooks installed")
    encoder.spatial_attn.force_open = flag
    encoder.channel_attn.force_open = flag
