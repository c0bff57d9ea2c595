"""Seeded, resumable training loop with per-step loss logging."""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import config_hash, load_checkpoint, restore_model, save_checkpoint
from .config import RunConfig
from .data import (
    PreprocessedSample,
    compute_channel_stats,
    load_refuge_format,
    normalize_image,
    preprocess,
    preprocess_cartesian,
    sample_prompt_rng,
    split,
)
from .decoder import sample_point_prompt
from .exceptions import CheckpointMismatchError, InvalidArgumentError
from .losses import LossWeights, joint_loss
from .model import SegModel
from .optim import Adam
from .peft import partition_parameters

WORKERS_ENV = "POLARSEG_WORKERS"

LAST_CHECKPOINT = "checkpoint_last.psc"
FINAL_CHECKPOINT = "checkpoint.psc"
LOSS_LOG = "loss_log.tsv"


def resume_compatibility_hash(cfg: RunConfig) -> str:
    """Config identity for resume checks; epochs and paths may legitimately change."""
    import hashlib
    import json

    from .config import flatten_config

    flat = {k: v for k, v in flatten_config(cfg).items()
            if k not in ("run.epochs", "run.out_dir", "run.dataset_root")}
    return hashlib.sha256(json.dumps(flat, sort_keys=True).encode("utf-8")).hexdigest()


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise InvalidArgumentError(f"{WORKERS_ENV} must be an integer, got {raw!r}")


def _preprocess_one(args):
    rec, use_polar, grid, margin, size = args
    if use_polar:
        return preprocess(rec, grid, margin, target_size=size)
    return preprocess_cartesian(rec, margin, target_size=size)


def preprocess_records(records, cfg: RunConfig) -> list[PreprocessedSample]:
    """Preprocess in record order; worker fan-out keeps the ordering."""
    size = cfg.model.encoder.image_size
    jobs = [(rec, cfg.use_polar, cfg.grid, cfg.margin, size) for rec in records]
    workers = worker_count()
    if workers == 1 or len(jobs) < 4:
        return [_preprocess_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_preprocess_one, jobs))


def apply_partition(model: SegModel, partition):
    """Frozen parameters stop requiring gradients (saves backward work)."""
    for name, p in model.named_parameters():
        p.requires_grad = partition.is_trainable(name)


@dataclass
class TrainResult:
    checkpoint_path: Path
    loss_log_path: Path
    epoch_history: list[dict] = field(default_factory=list)
    train_seconds: float = 0.0


def _assemble_batch(samples, indices, mean, std, seed, epoch):
    images = np.stack([normalize_image(samples[i].image, mean, std) for i in indices])
    prompts = []
    for i in indices:
        rng = sample_prompt_rng(seed, 1, epoch, int(i))
        prompts.append(sample_point_prompt(samples[i].disc_mask, rng))
    disc = np.stack([samples[i].disc_mask for i in indices]).astype(np.float32)
    cup = np.stack([samples[i].cup_mask for i in indices]).astype(np.float32)
    return images, prompts, disc, cup


def train_run(cfg: RunConfig, resume: bool = False, log=print) -> TrainResult:
    if not cfg.dataset_root:
        raise InvalidArgumentError("config has no dataset_root")
    if not cfg.out_dir:
        raise InvalidArgumentError("config has no out_dir")
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    records = load_refuge_format(cfg.dataset_root)
    train_recs, _ = split(records, cfg.split_ratio, cfg.seed)
    if not train_recs:
        raise InvalidArgumentError("training split is empty")
    t_pre = time.monotonic()
    samples = preprocess_records(train_recs, cfg)
    mean, std = compute_channel_stats(samples)
    log(f"preprocessed {len(samples)} training samples "
        f"in {time.monotonic() - t_pre:.1f}s")

    start_epoch = 0
    last_path = out_dir / LAST_CHECKPOINT
    loss_log_path = out_dir / LOSS_LOG
    optimizer_state = None
    log_lines: list[str] = []
    if resume and last_path.exists():
        ckpt = load_checkpoint(last_path)
        if resume_compatibility_hash(ckpt.run_config) != resume_compatibility_hash(cfg):
            raise CheckpointMismatchError(
                f"resume config differs from checkpoint: checkpoint sha256 "
                f"{ckpt.config_sha256[:12]}, current config sha256 {config_hash(cfg)[:12]}")
        model = restore_model(ckpt)
        partition = partition_parameters(model, cfg.mode)
        start_epoch = ckpt.epoch
        optimizer_state = ckpt.optimizer_state()
        if loss_log_path.exists():
            log_lines = loss_log_path.read_text().splitlines()[1:]
        log(f"resuming from epoch {start_epoch}")
    else:
        model = SegModel(cfg.model, seed=cfg.seed)
        partition = partition_parameters(model, cfg.mode)
    apply_partition(model, partition)

    named = dict(model.named_parameters())
    trainable = [(n, named[n]) for n in sorted(partition.trainable_names())]
    if not trainable:
        raise InvalidArgumentError(f"mode {cfg.mode!r} leaves nothing trainable")
    optimizer = Adam(trainable, lr=cfg.learning_rate)
    if optimizer_state is not None:
        optimizer.load_state_dict(optimizer_state)

    weights = LossWeights(cfg.loss.disc, cfg.loss.cup, cfg.loss.containment)
    n = len(samples)
    history = []
    steps_per_epoch = (n + cfg.batch_size - 1) // cfg.batch_size
    step = start_epoch * steps_per_epoch
    log_lines = log_lines[:step]
    header = "step\tl_disk\tl_cup\tl_contain\ttotal\n"
    t0 = time.monotonic()
    for epoch in range(start_epoch, cfg.epochs):
        order = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0, epoch))).permutation(n)
        sums = np.zeros(4)
        batches = 0
        for lo in range(0, n, cfg.batch_size):
            indices = order[lo:lo + cfg.batch_size]
            images, prompts, disc, cup = _assemble_batch(samples, indices, mean, std,
                                                         cfg.seed, epoch)
            logits = model(images, prompts)
            breakdown = joint_loss(logits, disc, cup, weights)
            breakdown.node.backward()
            optimizer.step()
            optimizer.zero_grad()
            step += 1
            batches += 1
            sums += (breakdown.l_disk, breakdown.l_cup, breakdown.l_contain, breakdown.total)
            log_lines.append(f"{step}\t{breakdown.l_disk:.6f}\t{breakdown.l_cup:.6f}"
                             f"\t{breakdown.l_contain:.6f}\t{breakdown.total:.6f}")
        means = sums / batches
        history.append({"epoch": epoch, "l_disk": means[0], "l_cup": means[1],
                        "l_contain": means[2], "total": means[3]})
        log(f"epoch {epoch + 1}/{cfg.epochs}: total {means[3]:.4f} "
            f"(disc {means[0]:.4f} cup {means[1]:.4f} contain {means[2]:.4f})")
        save_checkpoint(last_path, model, cfg, partition, mean, std,
                        epoch=epoch + 1, optimizer=optimizer)
        loss_log_path.write_text(header + "\n".join(log_lines) + "\n")

    final_path = out_dir / FINAL_CHECKPOINT
    save_checkpoint(final_path, model, cfg, partition, mean, std, epoch=cfg.epochs)
    loss_log_path.write_text(header + "\n".join(log_lines) + "\n")
    return TrainResult(checkpoint_path=final_path, loss_log_path=loss_log_path,
                       epoch_history=history, train_seconds=time.monotonic() - t0)
