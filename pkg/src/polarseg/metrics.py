"""Overlap metrics, vertical diameters, cup-to-disc ratio, and evaluation reports."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import EmptyMaskError, InvalidArgumentError


def _as_bool_pair(a, b):
    a = np.asarray(a).astype(bool)
    b = np.asarray(b).astype(bool)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"mask shapes differ: {a.shape} vs {b.shape}")
    return a, b


def dice(a, b) -> float:
    """Dice overlap 2|a&b| / (|a|+|b|); 1.0 when both masks are empty."""
    a, b = _as_bool_pair(a, b)
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / total


def iou(a, b) -> float:
    """Intersection over union; 1.0 when both masks are empty."""
    a, b = _as_bool_pair(a, b)
    union = int(np.logical_or(a, b).sum())
    if union == 0:
        return 1.0
    return int(np.logical_and(a, b).sum()) / union


def vertical_diameter(mask) -> int:
    """Largest per-column vertical extent (last minus first foreground row + 1)."""
    mask = np.asarray(mask).astype(bool)
    cols = mask.any(axis=0)
    if not cols.any():
        return 0
    first = mask.argmax(axis=0)
    last = mask.shape[0] - 1 - mask[::-1].argmax(axis=0)
    extents = np.where(cols, last - first + 1, 0)
    return int(extents.max())


def cdr(disc_mask, cup_mask) -> float:
    """Vertical cup diameter over vertical disc diameter."""
    vdd = vertical_diameter(disc_mask)
    if vdd == 0:
        raise EmptyMaskError("disc mask is empty; CDR undefined")
    return vertical_diameter(cup_mask) / vdd


@dataclass
class MetricReport:
    """Per-sample and mean Dice/IoU for disc and cup, plus optional CDR error."""

    sample_ids: list[str] = field(default_factory=list)
    disc_dice: list[float] = field(default_factory=list)
    disc_iou: list[float] = field(default_factory=list)
    cup_dice: list[float] = field(default_factory=list)
    cup_iou: list[float] = field(default_factory=list)
    cdr_error: list[float] = field(default_factory=list)

    @property
    def n_samples(self) -> int:
        return len(self.sample_ids)

    def means(self) -> dict[str, float]:
        out = {
            "disc_dice": float(np.mean(self.disc_dice)),
            "disc_iou": float(np.mean(self.disc_iou)),
            "cup_dice": float(np.mean(self.cup_dice)),
            "cup_iou": float(np.mean(self.cup_iou)),
        }
        if self.cdr_error:
            out["cdr_mae"] = float(np.mean(np.abs(self.cdr_error)))
        return out

    def to_table(self) -> str:
        """Tab-delimited summary, one row per structure."""
        m = self.means()
        lines = ["structure\tdice\tiou",
                 f"disc\t{m['disc_dice']:.6f}\t{m['disc_iou']:.6f}",
                 f"cup\t{m['cup_dice']:.6f}\t{m['cup_iou']:.6f}"]
        if "cdr_mae" in m:
            lines.append(f"cdr_mae\t{m['cdr_mae']:.6f}\t-")
        lines.append(f"n_samples\t{self.n_samples}\t-")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        payload = {
            "n_samples": self.n_samples,
            "means": self.means(),
            "per_sample": {
                "id": self.sample_ids,
                "disc_dice": self.disc_dice,
                "disc_iou": self.disc_iou,
                "cup_dice": self.cup_dice,
                "cup_iou": self.cup_iou,
                "cdr_error": self.cdr_error,
            },
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def evaluate(predictor, records) -> MetricReport:
    """Score a predictor over records with ground truth.

    `predictor.predict(record)` must return binary (disc, cup) masks in the
    record's original Cartesian frame; metrics are computed there.
    """
    records = list(records)
    if not records:
        raise InvalidArgumentError("cannot evaluate on an empty dataset")
    report = MetricReport()
    for rec in records:
        disc_pred, cup_pred = predictor.predict(rec)
        report.sample_ids.append(rec.id)
        report.disc_dice.append(dice(disc_pred, rec.disc_mask))
        report.disc_iou.append(iou(disc_pred, rec.disc_mask))
        report.cup_dice.append(dice(cup_pred, rec.cup_mask))
        report.cup_iou.append(iou(cup_pred, rec.cup_mask))
        if rec.disc_mask.any() and disc_pred.any():
            report.cdr_error.append(cdr(disc_pred, cup_pred) - cdr(rec.disc_mask, rec.cup_mask))
    return report
