"""Partition, freeze-contract, and parameter-accounting tests."""

import numpy as np
import pytest

from polarseg.decoder import PointPrompt
from polarseg.encoder import AdapterConfig, EncoderConfig
from polarseg.exceptions import InvalidArgumentError
from polarseg.losses import joint_loss
from polarseg.model import ModelConfig, SegModel
from polarseg.optim import Adam
from polarseg.peft import (
    ALL_TAGS,
    ParameterPartition,
    analytic_census,
    analytic_trainable_fraction,
    partition_parameters,
    snapshot_parameters,
    trainable_fraction,
    verify_frozen,
    vit_b_like_config,
)
from polarseg.train import apply_partition


def tiny_model_config(**overrides):
    base = dict(
        encoder=EncoderConfig(image_size=64, patch_size=8, embed_dim=48, depth=4,
                              num_heads=4, window_size=4, global_block_indices=(3,),
                              mlp_ratio=2.0, neck_dim=32),
        adapter=AdapterConfig(bottleneck_ratio=0.25))
    base.update(overrides)
    return ModelConfig(**base)


class TestPartition:
    def test_totality_and_disjointness(self):
        model = SegModel(tiny_model_config(), seed=1)
        partition = partition_parameters(model, "peft")
        names = [n for n, _ in model.named_parameters()]
        assert sorted(partition.tags) == sorted(names)  # every parameter exactly once
        assert set(partition.tags.values()) == set(ALL_TAGS)
        assert set(partition.trainable_names()) | set(partition.frozen_names()) == set(names)
        assert not set(partition.trainable_names()) & set(partition.frozen_names())

    def test_mode_table(self):
        model = SegModel(tiny_model_config(), seed=1)
        peft = partition_parameters(model, "peft")
        assert peft.trainable_flags() == {"adapter": True, "cbam": True,
                                          "base_encoder": False, "prompt_encoder": False,
                                          "mask_decoder": False}
        for mode in ("full", "scratch"):
            part = partition_parameters(model, mode)
            assert trainable_fraction(part) == 1.0

    def test_unknown_mode(self):
        model = SegModel(tiny_model_config(), seed=1)
        with pytest.raises(InvalidArgumentError):
            partition_parameters(model, "lora")

    def test_nothing_trainable_fraction(self):
        model = SegModel(tiny_model_config(), seed=1)
        part = partition_parameters(model, "peft")
        empty = ParameterPartition(tags=part.tags, sizes=part.sizes,
                                   trainable_tags=frozenset(), mode="peft")
        assert trainable_fraction(empty) == 0.0


class TestCensus:
    @pytest.mark.parametrize("overrides", [
        {},
        {"use_adapter": False},
        {"use_cbam": False},
        {"use_adapter": False, "use_cbam": False},
        {"decoder_depth": 3},
    ])
    def test_analytic_matches_enumeration(self, overrides):
        cfg = tiny_model_config(**overrides)
        model = SegModel(cfg, seed=2)
        enumerated = partition_parameters(model, "peft").census()
        analytic = {k: v for k, v in analytic_census(cfg).items() if v}
        assert analytic == enumerated

    def test_vit_b_like_fraction_below_five_percent(self):
        frac = analytic_trainable_fraction(vit_b_like_config(), "peft")
        assert 0.0 < frac < 0.05

    def test_desk_scale_fraction_below_fifteen_percent(self):
        frac = analytic_trainable_fraction(ModelConfig(), "peft")
        assert 0.0 < frac < 0.15

    def test_desk_analytic_matches_enumeration(self):
        cfg = ModelConfig()
        model = SegModel(cfg, seed=0)
        assert partition_parameters(model, "peft").census() == analytic_census(cfg)


def run_steps(model, mode, steps=3, lr=1e-3, seed=9):
    partition = partition_parameters(model, mode)
    apply_partition(model, partition)
    named = dict(model.named_parameters())
    optimizer = Adam([(n, named[n]) for n in sorted(partition.trainable_names())], lr=lr)
    rng = np.random.default_rng(seed)
    img = rng.uniform(size=(2, 64, 64, 3)).astype(np.float32)
    prompts = [PointPrompt(8, 8), PointPrompt(30, 30)]
    disc = (rng.uniform(size=(2, 64, 64)) > 0.4).astype(np.float32)
    cup = (disc * (rng.uniform(size=(2, 64, 64)) > 0.5)).astype(np.float32)
    for _ in range(steps):
        joint_loss(model(img, prompts), disc, cup).node.backward()
        optimizer.step()
        optimizer.zero_grad()
    return partition


class TestFreezeContract:
    def test_peft_freeze_bitwise(self):
        cfg = tiny_model_config(adapter=AdapterConfig(bottleneck_ratio=0.25,
                                                      up_projection_init="small-random"))
        model = SegModel(cfg, seed=3)
        before = snapshot_parameters(model)
        partition = run_steps(model, "peft")
        after = snapshot_parameters(model)
        report = verify_frozen(before, after, partition)
        assert report.passed, str(report)
        changed_tags = {partition.tags[n] for n in report.changed_trainable}
        assert "adapter" in changed_tags and "cbam" in changed_tags

    def test_full_mode_moves_base(self):
        model = SegModel(tiny_model_config(), seed=4)
        before = snapshot_parameters(model)
        partition = run_steps(model, "full")
        after = snapshot_parameters(model)
        report = verify_frozen(before, after, partition)
        assert report.passed  # nothing frozen in full mode
        changed_tags = {partition.tags[n] for n in report.changed_trainable}
        assert "base_encoder" in changed_tags

    def test_violation_detected(self):
        model = SegModel(tiny_model_config(), seed=5)
        partition = partition_parameters(model, "peft")
        before = snapshot_parameters(model)
        after = {k: v.copy() for k, v in before.items()}
        after["encoder.neck.w"][0, 0] += 1.0
        report = verify_frozen(before, after, partition)
        assert not report.passed
        assert report.violations[0][0] == "encoder.neck.w"
        assert report.violations[0][1] == "base_encoder"

    def test_snapshot_mismatch_rejected(self):
        model = SegModel(tiny_model_config(), seed=6)
        partition = partition_parameters(model, "peft")
        before = snapshot_parameters(model)
        after = dict(list(before.items())[:-1])
        with pytest.raises(InvalidArgumentError):
            verify_frozen(before, after, partition)

    def test_optimizer_only_sees_trainable(self):
        model = SegModel(tiny_model_config(), seed=7)
        partition = partition_parameters(model, "peft")
        named = dict(model.named_parameters())
        optimizer = Adam([(n, named[n]) for n in sorted(partition.trainable_names())])
        assert set(optimizer.m) == set(partition.trainable_names())
