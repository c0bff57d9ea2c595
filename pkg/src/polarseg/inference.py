"""Prediction pipeline: preprocess, run the model, undo the warp."""

from __future__ import annotations

import zlib

import numpy as np

from .data import (
    PreprocessedSample,
    SampleRecord,
    normalize_image,
    preprocess,
    preprocess_cartesian,
    sample_prompt_rng,
)
from .decoder import sample_point_prompt
from .model import SegModel
from .polar import PolarGrid, resize_cartesian, roi_crop_box, warp_to_cartesian


def _id_stream(seed: int, sample_id: str) -> np.random.Generator:
    return sample_prompt_rng(seed, zlib.crc32(sample_id.encode("utf-8")))


def paste_crop_mask(mask: np.ndarray, roi, orig_hw) -> np.ndarray:
    """Map a mask predicted over the ROI crop back into the original frame."""
    y0, x0, side = roi_crop_box(roi)
    big = resize_cartesian(mask.astype(np.float32), side, side, "nearest") > 0.5
    out = np.zeros(orig_hw, dtype=bool)
    ys0, xs0 = max(y0, 0), max(x0, 0)
    ys1, xs1 = min(y0 + side, orig_hw[0]), min(x0 + side, orig_hw[1])
    if ys1 > ys0 and xs1 > xs0:
        out[ys0:ys1, xs0:xs1] = big[ys0 - y0:ys1 - y0, xs0 - x0:xs1 - x0]
    return out


class SegPredictor:
    """Runs the documented pipeline per record:

    crop -> (polar warp) -> resize -> normalize -> model -> sigmoid ->
    threshold 0.5 -> inverse warp back to the original Cartesian frame.

    Prompts are drawn from the preprocessed disc ground truth with a stream
    keyed by the sample id, so repeated evaluations are reproducible.
    """

    def __init__(self, model: SegModel, grid: PolarGrid, margin: float,
                 norm_mean: np.ndarray, norm_std: np.ndarray,
                 use_polar: bool = True, prompt_seed: int = 0):
        self.model = model
        self.grid = grid
        self.margin = margin
        self.norm_mean = norm_mean
        self.norm_std = norm_std
        self.use_polar = use_polar
        self.prompt_seed = prompt_seed

    def preprocess_record(self, rec: SampleRecord) -> PreprocessedSample:
        size = self.model.cfg.encoder.image_size
        if self.use_polar:
            return preprocess(rec, self.grid, self.margin, target_size=size)
        return preprocess_cartesian(rec, self.margin, target_size=size)

    def predict_sample(self, pre: PreprocessedSample):
        """Probabilities (S, S, 2) for one preprocessed sample."""
        rng = _id_stream(self.prompt_seed, pre.id)
        prompt = sample_point_prompt(pre.disc_mask, rng)
        img = normalize_image(pre.image, self.norm_mean, self.norm_std)
        probs = self.model.predict_probabilities(img[None], [prompt])[0]
        return probs

    def predict_polar_masks(self, pre: PreprocessedSample):
        probs = self.predict_sample(pre)
        return probs[..., 0] >= 0.5, probs[..., 1] >= 0.5

    def predict(self, rec: SampleRecord):
        """Binary (disc, cup) masks in the record's original frame."""
        pre = self.preprocess_record(rec)
        disc_p, cup_p = self.predict_polar_masks(pre)
        h, w = pre.orig_hw
        if pre.domain == "polar":
            disc = warp_to_cartesian(disc_p.astype(np.float32), pre.roi, h, w,
                                     interpolation="nearest") > 0.5
            cup = warp_to_cartesian(cup_p.astype(np.float32), pre.roi, h, w,
                                    interpolation="nearest") > 0.5
        else:
            disc = paste_crop_mask(disc_p, pre.roi, pre.orig_hw)
            cup = paste_crop_mask(cup_p, pre.roi, pre.orig_hw)
        return disc, cup


class GroundTruthPredictor:
    """Oracle that returns the stored annotation (pipeline upper bound)."""

    def predict(self, rec: SampleRecord):
        return rec.disc_mask.copy(), rec.cup_mask.copy()


class ConstantPredictor:
    """Returns all-background (or all-foreground) masks."""

    def __init__(self, value: bool = False):
        self.value = value

    def predict(self, rec: SampleRecord):
        fill = np.full(rec.disc_mask.shape, self.value, dtype=bool)
        return fill.copy(), fill.copy()
