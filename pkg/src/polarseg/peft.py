"""Parameter partitioning: freeze the base encoder, train the add-on modules.

Every parameter carries exactly one tag. In ``peft`` mode only the adapter
and attention-gate parameters train while the base encoder, prompt encoder,
and mask decoder stay frozen; ``full`` and ``scratch`` train everything (the
two differ only in whether weights are expected to come from a checkpoint or
from random initialization).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encoder import AdapterConfig, EncoderConfig
from .exceptions import InvalidArgumentError
from .model import ModelConfig

ALL_TAGS = ("base_encoder", "adapter", "cbam", "prompt_encoder", "mask_decoder")

MODE_TRAINABLE = {
    "peft": frozenset({"adapter", "cbam"}),
    "full": frozenset(ALL_TAGS),
    "scratch": frozenset(ALL_TAGS),
}


@dataclass
class ParameterPartition:
    """Per-parameter tags plus the set of tags that train."""

    tags: dict[str, str]
    sizes: dict[str, int]
    trainable_tags: frozenset[str]
    mode: str = "peft"

    def trainable_flags(self) -> dict[str, bool]:
        present = sorted(set(self.tags.values()))
        return {tag: tag in self.trainable_tags for tag in present}

    def is_trainable(self, name: str) -> bool:
        return self.tags[name] in self.trainable_tags

    def trainable_names(self) -> list[str]:
        return [n for n in self.tags if self.is_trainable(n)]

    def frozen_names(self) -> list[str]:
        return [n for n in self.tags if not self.is_trainable(n)]

    def census(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for name, tag in self.tags.items():
            counts[tag] = counts.get(tag, 0) + self.sizes[name]
        return counts


def partition_parameters(model, mode: str) -> ParameterPartition:
    """Tag every model parameter and mark which tags train under `mode`."""
    if mode not in MODE_TRAINABLE:
        raise InvalidArgumentError(f"unknown mode {mode!r}; choose from {sorted(MODE_TRAINABLE)}")
    tags: dict[str, str] = {}
    sizes: dict[str, int] = {}
    for name, p in model.named_parameters():
        if name in tags:
            raise InvalidArgumentError(f"duplicate parameter name {name!r}")
        if p.tag not in ALL_TAGS:
            raise InvalidArgumentError(f"parameter {name!r} has unknown tag {p.tag!r}")
        tags[name] = p.tag
        sizes[name] = int(p.data.size)
    return ParameterPartition(tags=tags, sizes=sizes,
                              trainable_tags=MODE_TRAINABLE[mode], mode=mode)


def trainable_fraction(partition: ParameterPartition) -> float:
    total = sum(partition.sizes.values())
    if total == 0:
        return 0.0
    trainable = sum(partition.sizes[n] for n in partition.trainable_names())
    return trainable / total


def snapshot_parameters(model) -> dict[str, np.ndarray]:
    return {name: p.data.copy() for name, p in model.named_parameters()}


@dataclass
class FreezeReport:
    passed: bool
    violations: list[tuple[str, str, float]] = field(default_factory=list)  # name, tag, max delta
    changed_trainable: list[str] = field(default_factory=list)

    def __str__(self):
        lines = [f"freeze check: {'PASS' if self.passed else 'FAIL'}"]
        for name, tag, delta in self.violations:
            lines.append(f"  frozen parameter moved: {name} [{tag}] max|delta|={delta:.3e}")
        lines.append(f"  trainable parameters changed: {len(self.changed_trainable)}")
        return "\n".join(lines)


def verify_frozen(before: dict[str, np.ndarray], after: dict[str, np.ndarray],
                  partition: ParameterPartition) -> FreezeReport:
    """Frozen parameters must be bitwise unchanged between the two snapshots."""
    if set(before) != set(after) or set(before) != set(partition.tags):
        raise InvalidArgumentError("snapshots and partition cover different parameter sets")
    violations = []
    changed = []
    for name in partition.tags:
        same = np.array_equal(before[name], after[name])
        if partition.is_trainable(name):
            if not same:
                changed.append(name)
        elif not same:
            delta = float(np.max(np.abs(after[name] - before[name])))
            violations.append((name, partition.tags[name], delta))
    return FreezeReport(passed=not violations, violations=violations,
                        changed_trainable=changed)


# -- analytic parameter accounting -------------------------------------------

def _linear_params(in_dim: int, out_dim: int) -> int:
    return in_dim * out_dim + out_dim


def analytic_census(cfg: ModelConfig) -> dict[str, int]:
    """Parameter count per tag computed from the configuration alone.

    Mirrors the construction in :mod:`polarseg.model`; the test suite pins
    this against enumeration over an instantiated model.
    """
    enc = cfg.encoder
    d = enc.embed_dim
    side = enc.tokens_per_side
    D = enc.neck_dim
    counts = dict.fromkeys(ALL_TAGS, 0)

    counts["base_encoder"] += _linear_params(enc.patch_size ** 2 * enc.in_channels, d)
    counts["base_encoder"] += side * side * d  # learned position grid
    mlp_hidden = int(d * enc.mlp_ratio)
    per_block = (2 * d  # norm1
                 + _linear_params(d, 3 * d) + _linear_params(d, d)  # attention
                 + 2 * d  # norm2
                 + _linear_params(d, mlp_hidden) + _linear_params(mlp_hidden, d))
    counts["base_encoder"] += enc.depth * per_block
    counts["base_encoder"] += _linear_params(d, D) + 2 * D  # neck + norm

    if cfg.use_adapter:
        b = cfg.adapter.resolve_bottleneck(d)
        per_adapter = _linear_params(d, b) + _linear_params(b, d)
        counts["adapter"] += enc.depth * 2 * per_adapter

    if cfg.use_cbam:
        k = cfg.spatial.conv_kernel
        counts["cbam"] += k * k * 2 * 1 + 1
        hid = cfg.channel.hidden_dim(d)
        counts["cbam"] += _linear_params(d, hid) + _linear_params(hid, d)

    counts["prompt_encoder"] += 2 * D  # label embeddings (fourier matrix is a buffer)

    dec_mlp_hidden = int(D * cfg.decoder_mlp_ratio)
    per_two_way = (_linear_params(D, 3 * D) + _linear_params(D, D)  # self attention
                   + 8 * _linear_params(D, D)  # two cross attentions
                   + _linear_params(D, dec_mlp_hidden) + _linear_params(dec_mlp_hidden, D)
                   + 4 * 2 * D)  # four layer norms
    counts["mask_decoder"] += 2 * D  # output tokens
    counts["mask_decoder"] += cfg.decoder_depth * per_two_way
    stages = enc.patch_size.bit_length() - 1
    channels = [D]
    for _ in range(stages):
        channels.append(max(channels[-1] // 2, 4))
    for i in range(stages):
        counts["mask_decoder"] += 2 * 2 * channels[i] * channels[i + 1] + channels[i + 1]
        if i < stages - 1:
            counts["mask_decoder"] += 2 * channels[i + 1]
    final = channels[-1]
    counts["mask_decoder"] += 2 * (2 * _linear_params(D, D) + _linear_params(D, final))
    counts["mask_decoder"] += 2  # per-mask bias
    return counts


def analytic_trainable_fraction(cfg: ModelConfig, mode: str) -> float:
    if mode not in MODE_TRAINABLE:
        raise InvalidArgumentError(f"unknown mode {mode!r}")
    counts = analytic_census(cfg)
    total = sum(counts.values())
    trainable = sum(v for tag, v in counts.items() if tag in MODE_TRAINABLE[mode])
    return trainable / total


def vit_b_like_config() -> ModelConfig:
    """Accounting-scale configuration mirroring a large pretrained encoder.

    Used only to report the trainable-parameter fraction at realistic scale;
    never instantiated for training here.
    """
    return ModelConfig(
        encoder=EncoderConfig(image_size=1024, patch_size=16, embed_dim=768, depth=12,
                              num_heads=12, window_size=14,
                              global_block_indices=(2, 5, 8, 11),
                              mlp_ratio=4.0, neck_dim=256),
        adapter=AdapterConfig(bottleneck_ratio=0.0625),
        use_adapter=True,
        use_cbam=True,
    )
