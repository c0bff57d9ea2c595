"""Full segmentation model: encoder, attention gates, prompt encoder, mask decoder.

Each component draws its initial weights from its own seeded stream, so
toggling adapters or attention gates on and off never disturbs the base
encoder's initialization — ablation rows and the zero-init identity checks
compare like with like.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .cbam import ChannelAttnConfig, SpatialAttnConfig, install_hooks
from .decoder import MaskDecoder, PointPrompt, PromptEncoder
from .encoder import AdapterConfig, EncoderConfig, ViTEncoder
from .exceptions import InvalidArgumentError
from .layers import Module
from .tensor import Tensor


@dataclass(frozen=True)
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    adapter: AdapterConfig = field(default_factory=AdapterConfig)
    spatial: SpatialAttnConfig = field(default_factory=SpatialAttnConfig)
    channel: ChannelAttnConfig = field(default_factory=ChannelAttnConfig)
    use_adapter: bool = True
    use_cbam: bool = True
    decoder_depth: int = 2
    decoder_heads: int = 4
    decoder_mlp_ratio: float = 2.0

    def __post_init__(self):
        if self.decoder_depth < 1:
            raise InvalidArgumentError("decoder_depth must be >= 1")
        if self.encoder.neck_dim % self.decoder_heads != 0:
            raise InvalidArgumentError(
                f"neck_dim {self.encoder.neck_dim} not divisible by decoder_heads {self.decoder_heads}")


class SegModel(Module):
    """Point-prompted two-channel mask predictor over polar images."""

    def __init__(self, cfg: ModelConfig, seed: int, dtype=np.float32):
        self.cfg = cfg
        ss = np.random.SeedSequence(seed)
        base_rng, adapter_rng, cbam_rng, prompt_rng, decoder_rng = (
            np.random.default_rng(child) for child in ss.spawn(5))

        enc_cfg = cfg.encoder
        self.encoder = ViTEncoder(enc_cfg, cfg.adapter if cfg.use_adapter else None,
                                  base_rng, adapter_rng)
        if cfg.use_cbam:
            install_hooks(self.encoder, cfg.spatial, cfg.channel, cbam_rng)
        size = enc_cfg.image_size
        self.prompt_encoder = PromptEncoder(enc_cfg.neck_dim, (size, size), prompt_rng)
        stages = enc_cfg.patch_size.bit_length() - 1  # upsample back to input resolution
        self.decoder = MaskDecoder(enc_cfg.neck_dim, enc_cfg.tokens_per_side, stages,
                                   decoder_rng, depth=cfg.decoder_depth,
                                   num_heads=cfg.decoder_heads,
                                   mlp_ratio=cfg.decoder_mlp_ratio)
        grid = enc_cfg.tokens_per_side
        self.register_buffer("dense_pe", self.prompt_encoder.dense_grid(grid, grid))
        self.cast(dtype)

    @property
    def dtype(self):
        return self.encoder.patch_embed.proj.w.dtype

    def forward(self, images: np.ndarray, prompts: list[PointPrompt]) -> Tensor:
        """Normalized (B, S, S, C) images + one prompt per sample -> (B, S, S, 2) logits."""
        images = np.asarray(images, dtype=self.dtype)
        if images.ndim != 4:
            raise InvalidArgumentError(f"expected a 4D image batch, got shape {images.shape}")
        if len(prompts) != images.shape[0]:
            raise InvalidArgumentError(
                f"got {len(prompts)} prompts for a batch of {images.shape[0]}")
        embedding = self.encoder.encode(Tensor(images))
        prompt_emb = self.prompt_encoder.encode_points(prompts)
        return self.decoder(embedding, prompt_emb, self._buffers["dense_pe"])

    __call__ = forward

    def predict_probabilities(self, images: np.ndarray, prompts: list[PointPrompt]) -> np.ndarray:
        """Inference pass: sigmoid probabilities without building the autograd graph."""
        with T.no_grad():
            logits = self.forward(images, prompts)
            return T.sigmoid(logits).data
