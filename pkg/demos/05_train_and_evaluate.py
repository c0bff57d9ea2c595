"""End-to-end miniature experiment: synthesize, train, evaluate, visualize.

Runs the whole pipeline at toy scale (64x64 images, a 4-block encoder, a few
epochs) so it finishes in well under a minute on a laptop. The desk-scale
run behind the acceptance suite is the same code with the default
configuration: `polarseg train --preset desk ...`.

Outputs land in demos/output/05/.
"""

import dataclasses
from pathlib import Path

from polarseg.checkpoint import load_checkpoint, restore_model
from polarseg.config import preset
from polarseg.data import load_refuge_format, split, synthesize_dataset, write_dataset
from polarseg.inference import SegPredictor
from polarseg.metrics import evaluate
from polarseg.raster_io import save_image_png
from polarseg.train import train_run
from polarseg.visualize import sample_panel

OUT = Path(__file__).parent / "output" / "05"
DATA = OUT / "data"
RUN = OUT / "run"

cfg = dataclasses.replace(preset("tiny"), epochs=6, seed=13,
                          dataset_root=str(DATA), out_dir=str(RUN))

records = synthesize_dataset(cfg.synth, 16, seed=13)
write_dataset(records, DATA, manifest_extra={"seed": 13})
print(f"dataset: {len(records)} samples at {DATA}")

result = train_run(cfg)
first, last = result.epoch_history[0]["total"], result.epoch_history[-1]["total"]
print(f"loss: {first:.4f} (epoch 1) -> {last:.4f} (epoch {cfg.epochs})")

ckpt = load_checkpoint(result.checkpoint_path)
model = restore_model(ckpt)
predictor = SegPredictor(model, cfg.grid, cfg.margin, ckpt.norm_mean, ckpt.norm_std,
                         prompt_seed=cfg.seed)
_, test_records = split(load_refuge_format(DATA), cfg.split_ratio, cfg.seed)
report = evaluate(predictor, test_records)
print("test metrics:")
print(report.to_table())

rec = test_records[0]
pre = predictor.preprocess_record(rec)
probs = predictor.predict_sample(pre)
disc, cup = predictor.predict(rec)
save_image_png(OUT / "panel.png", sample_panel(rec, pre, probs, disc, cup))
print(f"four-panel overlay written to {OUT / 'panel.png'}")
