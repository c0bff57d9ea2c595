"""Command-line surface: synth, preprocess, train, eval, ablate, inspect, visualize.

Exit codes: 0 success, 1 user error (bad arguments, missing files, malformed
data), 2 internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, restore_model
from .config import RunConfig, load_config, preset, save_config
from .data import load_refuge_format, split, synthesize_dataset, write_dataset
from .exceptions import USER_ERRORS, InvalidArgumentError
from .inference import SegPredictor
from .metrics import evaluate
from .peft import (
    MODE_TRAINABLE,
    analytic_census,
    partition_parameters,
    vit_b_like_config,
)
from .raster_io import save_image_png, save_mask_png, save_raster
from .train import preprocess_records, train_run
from .visualize import sample_panel


def _load_run_config(args) -> RunConfig:
    if getattr(args, "config", None):
        cfg = load_config(args.config)
    else:
        cfg = preset(getattr(args, "preset", None) or "desk")
    overrides = {}
    for attr, key in (("data", "dataset_root"), ("out", "out_dir"), ("seed", "seed"),
                      ("epochs", "epochs"), ("batch_size", "batch_size"),
                      ("lr", "learning_rate"), ("mode", "mode")):
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    cfg = dataclasses.replace(cfg, **overrides)
    model = cfg.model
    if getattr(args, "no_adapter", False):
        model = dataclasses.replace(model, use_adapter=False)
    if getattr(args, "no_cbam", False):
        model = dataclasses.replace(model, use_cbam=False)
    cfg = dataclasses.replace(cfg, model=model)
    if getattr(args, "no_polar", False):
        cfg = dataclasses.replace(cfg, use_polar=False)
    return cfg


def cmd_synth(args) -> int:
    cfg = _load_run_config(args)
    synth = cfg.synth
    if args.contrast:
        synth = dataclasses.replace(synth, contrast=args.contrast)
    if args.image_size:
        scale = args.image_size / synth.image_size
        synth = dataclasses.replace(
            synth, image_size=args.image_size,
            disc_axis_range=(synth.disc_axis_range[0] * scale,
                             synth.disc_axis_range[1] * scale))
    if not args.out:
        raise InvalidArgumentError("synth requires --out")
    records = synthesize_dataset(synth, args.n, args.seed)
    out = Path(args.out)
    write_dataset(records, out, manifest_extra={
        "seed": args.seed,
        "config": {f.name: getattr(synth, f.name) for f in dataclasses.fields(synth)},
    })
    print(f"wrote {len(records)} samples to {out}")
    return 0


def cmd_preprocess(args) -> int:
    cfg = _load_run_config(args)
    if not cfg.dataset_root:
        raise InvalidArgumentError("preprocess requires --data (or config run.dataset_root)")
    if not cfg.out_dir:
        raise InvalidArgumentError("preprocess requires --out (or config run.out_dir)")
    records = load_refuge_format(cfg.dataset_root)
    if args.limit:
        records = records[: args.limit]
    if not records:
        raise InvalidArgumentError("dataset is empty")
    samples = preprocess_records(records, cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rois = {}
    for pre in samples:
        save_image_png(out / f"{pre.id}_polar.png", pre.image)
        save_raster(out / f"{pre.id}_polar.psr", pre.image.astype(np.float32))
        save_mask_png(out / f"{pre.id}_disc.png", pre.disc_mask.astype(np.uint8) * 255)
        save_mask_png(out / f"{pre.id}_cup.png", pre.cup_mask.astype(np.uint8) * 255)
        rois[pre.id] = {"center_x": pre.roi.center_x, "center_y": pre.roi.center_y,
                        "radius": pre.roi.radius, "orig_hw": list(pre.orig_hw),
                        "domain": pre.domain}
    (out / "rois.json").write_text(json.dumps(rois, indent=2, sort_keys=True) + "\n")
    print(f"preprocessed {len(samples)} samples into {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_run_config(args)
    result = train_run(cfg, resume=args.resume)
    save_config(cfg, Path(cfg.out_dir) / "run_config.txt")
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"loss log:   {result.loss_log_path}")
    print(f"train time: {result.train_seconds:.1f}s")
    return 0


def _evaluate_checkpoint(checkpoint_path, data_root, which: str, out_dir: Path,
                         export_masks: bool, overlays: int) -> dict:
    ckpt = load_checkpoint(checkpoint_path)
    model = restore_model(ckpt)
    cfg = ckpt.run_config
    records = load_refuge_format(data_root)
    if which == "all":
        chosen = sorted(records, key=lambda r: r.id)
    else:
        train_recs, test_recs = split(records, cfg.split_ratio, cfg.seed)
        chosen = train_recs if which == "train" else test_recs
    if not chosen:
        raise InvalidArgumentError(f"no records in split {which!r}")
    predictor = SegPredictor(model, cfg.grid, cfg.margin, ckpt.norm_mean, ckpt.norm_std,
                             use_polar=cfg.use_polar, prompt_seed=cfg.seed)
    report = evaluate(predictor, chosen)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "metrics.tsv").write_text(report.to_table())
    (out_dir / "metrics.json").write_text(report.to_json())
    if export_masks:
        mask_dir = out_dir / "masks"
        mask_dir.mkdir(exist_ok=True)
        for rec in chosen:
            disc, cup = predictor.predict(rec)
            save_mask_png(mask_dir / f"{rec.id}_disc.png", disc.astype(np.uint8) * 255)
            save_mask_png(mask_dir / f"{rec.id}_cup.png", cup.astype(np.uint8) * 255)
    if overlays:
        panel_dir = out_dir / "overlays"
        panel_dir.mkdir(exist_ok=True)
        for rec in chosen[:overlays]:
            pre = predictor.preprocess_record(rec)
            probs = predictor.predict_sample(pre)
            disc, cup = predictor.predict(rec)
            save_image_png(panel_dir / f"{rec.id}.png", sample_panel(rec, pre, probs, disc, cup))
    return report.means()


def cmd_eval(args) -> int:
    means = _evaluate_checkpoint(args.checkpoint, args.data, args.split, Path(args.out),
                                 args.export_masks, args.overlays)
    for key, value in means.items():
        print(f"{key}\t{value:.6f}")
    return 0


ABLATION_ROWS = [
    # (name, use_cbam, use_adapter, use_polar); the base model is always on
    ("base_only", False, False, False),
    ("cbam_adapter", True, True, False),
    ("cbam_pt", True, False, True),
    ("adapter_pt", False, True, True),
    ("all_modules", True, True, True),
]


def cmd_ablate(args) -> int:
    base = _load_run_config(args)
    out_root = Path(base.out_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    rows = []
    for name, use_cbam, use_adapter, use_polar in ABLATION_ROWS:
        cfg = dataclasses.replace(
            base,
            model=dataclasses.replace(base.model, use_cbam=use_cbam, use_adapter=use_adapter),
            use_polar=use_polar,
            out_dir=str(out_root / name))
        print(f"[{name}] training (cbam={use_cbam} adapter={use_adapter} polar={use_polar})")
        result = train_run(cfg, log=lambda msg: None)
        means = _evaluate_checkpoint(result.checkpoint_path, cfg.dataset_root, "test",
                                     Path(cfg.out_dir), False, 0)
        rows.append({"row": name, "cbam": use_cbam, "adapter": use_adapter,
                     "polar": use_polar, "seed": cfg.seed, **means})
    header = "row\tcbam\tadapter\tpolar\tseed\tdisc_dice\tdisc_iou\tcup_dice\tcup_iou"
    lines = [header]
    for r in rows:
        lines.append(f"{r['row']}\t{_mark(r['cbam'])}\t{_mark(r['adapter'])}\t{_mark(r['polar'])}"
                     f"\t{r['seed']}\t{r['disc_dice']:.6f}\t{r['disc_iou']:.6f}"
                     f"\t{r['cup_dice']:.6f}\t{r['cup_iou']:.6f}")
    table = "\n".join(lines) + "\n"
    (out_root / "ablation.tsv").write_text(table)
    (out_root / "ablation.json").write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
    print(table, end="")
    return 0


def _mark(flag: bool) -> str:
    return "yes" if flag else "no"


def cmd_inspect(args) -> int:
    if args.checkpoint:
        ckpt = load_checkpoint(args.checkpoint)
        model = restore_model(ckpt)
        partition = partition_parameters(model, ckpt.mode)
        census = partition.census()
        mode = ckpt.mode
        print(f"checkpoint: {args.checkpoint} (epoch {ckpt.epoch}, "
              f"config sha256 {ckpt.config_sha256[:12]})")
    else:
        cfg = vit_b_like_config() if args.accounting else _load_run_config(args).model
        census = analytic_census(cfg)
        mode = args.mode
    total = sum(census.values())
    print("tag\tparameters\ttrainable")
    for tag in sorted(census):
        flag = tag in MODE_TRAINABLE[mode]
        print(f"{tag}\t{census[tag]}\t{_mark(flag)}")
    trainable = sum(v for t, v in census.items() if t in MODE_TRAINABLE[mode])
    print(f"total\t{total}\t-")
    print(f"mode {mode}: trainable fraction {trainable / total:.6f}")
    return 0


def cmd_visualize(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    model = restore_model(ckpt)
    cfg = ckpt.run_config
    records = {r.id: r for r in load_refuge_format(args.data)}
    if args.id not in records:
        raise InvalidArgumentError(f"sample id {args.id!r} not found in {args.data}")
    rec = records[args.id]
    predictor = SegPredictor(model, cfg.grid, cfg.margin, ckpt.norm_mean, ckpt.norm_std,
                             use_polar=cfg.use_polar, prompt_seed=cfg.seed)
    pre = predictor.preprocess_record(rec)
    probs = predictor.predict_sample(pre)
    disc, cup = predictor.predict(rec)
    panel = sample_panel(rec, pre, probs, disc, cup)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_image_png(out, panel)
    print(f"wrote {out}")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are user errors (exit 1, not 2)
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="polarseg",
        description="Polar-domain optic disc and cup segmentation toolkit")
    parser.add_argument("--version", action="version", version=f"polarseg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p, with_toggles=False):
        p.add_argument("--config", help="path to a run config file")
        p.add_argument("--preset", choices=["desk", "fullscale", "tiny"],
                       help="named configuration (default: desk)")
        p.add_argument("--data", help="dataset root directory")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        if with_toggles:
            p.add_argument("--epochs", type=int)
            p.add_argument("--batch-size", type=int, dest="batch_size")
            p.add_argument("--lr", type=float)
            p.add_argument("--mode", choices=sorted(MODE_TRAINABLE))
            p.add_argument("--no-adapter", action="store_true")
            p.add_argument("--no-cbam", action="store_true")
            p.add_argument("--no-polar", action="store_true")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    add_config_args(p)
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--contrast", choices=["high", "low"])
    p.add_argument("--image-size", type=int, dest="image_size")
    p.set_defaults(func=cmd_synth, seed=0)

    p = sub.add_parser("preprocess", help="run the crop + polar-warp pipeline to disk")
    add_config_args(p)
    p.add_argument("--limit", type=int)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train a model")
    add_config_args(p, with_toggles=True)
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", choices=["train", "test", "all"], default="test")
    p.add_argument("--export-masks", action="store_true", dest="export_masks")
    p.add_argument("--overlays", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and evaluate the five toggle rows")
    add_config_args(p, with_toggles=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("inspect", help="print the per-tag parameter census")
    add_config_args(p)
    p.add_argument("--checkpoint")
    p.add_argument("--mode", choices=sorted(MODE_TRAINABLE), default="peft")
    p.add_argument("--accounting", action="store_true",
                   help="use the large-encoder accounting configuration")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("visualize", help="write a four-panel overlay for one sample")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--id", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_visualize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
