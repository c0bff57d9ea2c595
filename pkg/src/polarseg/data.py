"""Dataset handling: directory ingestion, synthetic fundus generation,
deterministic splitting, and the crop -> polar warp -> resize pipeline.

Dataset directory layout (shared by real and synthetic data)::

    root/
      images/<id>.png   RGB fundus image
      masks/<id>.png    8-bit grayscale annotation: 0 = cup, any value
                        <= 128 = disc (cup plus rim), 255 = background
      manifest.json     optional; written by the synthesizer (ids + seeds)

Ground truth always satisfies cup <= disc; loaders repair violations by
intersecting the cup with the disc and warn when they do.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .exceptions import IngestionError, InvalidArgumentError
from .polar import (
    PolarGrid,
    RoiSpec,
    crop_roi,
    crop_square,
    resize_cartesian,
    resize_polar,
    roi_crop_box,
    roi_in_crop,
    warp_to_polar,
)

DISC_GRAY_MAX = 128  # mask decode: 0 -> cup, <= 128 -> disc, 255 -> background


@dataclass
class SampleRecord:
    id: str
    image: np.ndarray  # (H, W, 3) float32 in [0, 1]
    disc_mask: np.ndarray  # (H, W) bool
    cup_mask: np.ndarray  # (H, W) bool

    @classmethod
    def create(cls, id: str, image, disc_mask, cup_mask, fix_containment: bool = True):
        image = np.asarray(image, dtype=np.float32)
        disc = np.asarray(disc_mask).astype(bool)
        cup = np.asarray(cup_mask).astype(bool)
        if image.ndim != 3 or image.shape[2] != 3:
            raise InvalidArgumentError(f"{id}: image must be (H, W, 3), got {image.shape}")
        if disc.shape != image.shape[:2] or cup.shape != image.shape[:2]:
            raise InvalidArgumentError(f"{id}: mask shapes must match the image")
        outside = int(np.logical_and(cup, ~disc).sum())
        if outside:
            if not fix_containment:
                raise InvalidArgumentError(f"{id}: {outside} cup pixels outside the disc")
            warnings.warn(f"{id}: intersecting cup with disc ({outside} stray pixels)")
            cup = np.logical_and(cup, disc)
        return cls(id=id, image=image, disc_mask=disc, cup_mask=cup)


@dataclass(frozen=True)
class SyntheticConfig:
    """Nested-ellipse fundus phantom: bright disc, brighter cup, vessels, noise."""

    image_size: int = 256
    disc_axis_range: tuple[float, float] = (36.0, 60.0)  # semi-axis, pixels
    cup_ratio_range: tuple[float, float] = (0.4, 0.6)  # per-axis cup/disc ratio
    contrast: str = "high"  # "high" | "low"
    noise_sigma: float = 0.02
    vessel_count: int = 4
    center_jitter: float = 0.08  # disc center offset, fraction of image size

    def __post_init__(self):
        lo, hi = self.cup_ratio_range
        if not (0.0 < lo <= hi < 1.0):
            raise InvalidArgumentError(f"cup ratio range must sit inside (0, 1), got {self.cup_ratio_range}")
        if self.disc_axis_range[0] <= 0 or self.disc_axis_range[0] > self.disc_axis_range[1]:
            raise InvalidArgumentError(f"bad disc axis range {self.disc_axis_range}")
        if self.contrast not in ("high", "low"):
            raise InvalidArgumentError(f"contrast must be 'high' or 'low', got {self.contrast!r}")


# intensity levels before the red-dominant tint is applied
_LEVELS = {"high": (0.30, 0.62, 0.88), "low": (0.42, 0.49, 0.55)}
_TINT = np.array([1.0, 0.75, 0.55], dtype=np.float32)
_VESSEL_SHADE = 0.45


def _ellipse(size: int, cy: float, cx: float, ry: float, rx: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    return ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0


def _border_point(rng: np.random.Generator, size: int) -> np.ndarray:
    edge = rng.integers(4)
    t = rng.uniform(0, size - 1)
    return np.array({0: (0.0, t), 1: (size - 1.0, t), 2: (t, 0.0), 3: (t, size - 1.0)}[int(edge)])


def _vessel_mask(size: int, count: int, rng: np.random.Generator) -> np.ndarray:
    canvas = np.zeros((size, size), dtype=bool)
    for _ in range(count):
        p0 = _border_point(rng, size)
        p1 = _border_point(rng, size)
        ctrl = np.array([size / 2, size / 2]) + rng.uniform(-0.25, 0.25, 2) * size
        t = np.linspace(0.0, 1.0, 4 * size)[:, None]
        pts = (1 - t) ** 2 * p0 + 2 * t * (1 - t) * ctrl + t**2 * p1
        ys = np.clip(np.round(pts[:, 0]).astype(int), 0, size - 1)
        xs = np.clip(np.round(pts[:, 1]).astype(int), 0, size - 1)
        canvas[ys, xs] = True
    width = max(1, int(round(size / 256)))
    return ndimage.binary_dilation(canvas, iterations=width)


def synthesize_sample(cfg: SyntheticConfig, rng: np.random.Generator,
                      sample_id: str = "synthetic") -> SampleRecord:
    size = cfg.image_size
    jitter = cfg.center_jitter * size
    cy = size / 2 + rng.uniform(-jitter, jitter)
    cx = size / 2 + rng.uniform(-jitter, jitter)
    ry = rng.uniform(*cfg.disc_axis_range)
    rx = rng.uniform(*cfg.disc_axis_range)
    ratio_y = rng.uniform(*cfg.cup_ratio_range)
    ratio_x = rng.uniform(*cfg.cup_ratio_range)
    off_y = rng.uniform(-1, 1) * 0.3 * (1 - ratio_y) * ry
    off_x = rng.uniform(-1, 1) * 0.3 * (1 - ratio_x) * rx

    disc = _ellipse(size, cy, cx, ry, rx)
    cup = _ellipse(size, cy + off_y, cx + off_x, ratio_y * ry, ratio_x * rx)
    for _ in range(6):  # offsets are small; concentric placement always nests
        if not np.any(cup & ~disc):
            break
        off_y *= 0.5 if abs(off_y) > 1e-6 else 0.0
        off_x *= 0.5 if abs(off_x) > 1e-6 else 0.0
        cup = _ellipse(size, cy + off_y, cx + off_x, ratio_y * ry, ratio_x * rx)

    bg, disc_level, cup_level = _LEVELS[cfg.contrast]
    gray = np.full((size, size), bg, dtype=np.float32)
    gray[disc] = disc_level
    gray[cup] = cup_level
    if cfg.vessel_count > 0:
        gray = np.where(_vessel_mask(size, cfg.vessel_count, rng),
                        gray * _VESSEL_SHADE, gray)
    img = gray[:, :, None] * _TINT[None, None, :]
    if cfg.noise_sigma > 0:
        img = img + rng.normal(0.0, cfg.noise_sigma, size=img.shape).astype(np.float32)
    img = np.clip(img, 0.0, 1.0).astype(np.float32)
    return SampleRecord.create(sample_id, img, disc, cup)


def encode_mask_gray(disc: np.ndarray, cup: np.ndarray) -> np.ndarray:
    """Binary pair -> grayscale annotation (0 cup, 128 rim, 255 background)."""
    out = np.full(disc.shape, 255, dtype=np.uint8)
    out[disc] = 128
    out[cup] = 0
    return out


def decode_mask_gray(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Grayscale annotation -> (disc, cup) binary pair."""
    values = np.asarray(values)
    known = np.isin(values, (0, DISC_GRAY_MAX, 255))
    if not known.all():
        bad = sorted(int(v) for v in np.unique(values[~known]))
        warnings.warn(f"mask contains unexpected gray values {bad[:8]}; "
                      f"decoding with the 0/<=128/255 convention")
    return values <= DISC_GRAY_MAX, values == 0


def write_dataset(records: list[SampleRecord], root, manifest_extra: dict | None = None):
    from .raster_io import save_image_png, save_mask_png

    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    for rec in records:
        save_image_png(root / "images" / f"{rec.id}.png", rec.image)
        save_mask_png(root / "masks" / f"{rec.id}.png",
                      encode_mask_gray(rec.disc_mask, rec.cup_mask))
    manifest = {"version": 1, "ids": [rec.id for rec in records]}
    if manifest_extra:
        manifest.update(manifest_extra)
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def synthesize_dataset(cfg: SyntheticConfig, n: int, seed: int) -> list[SampleRecord]:
    """Deterministic batch of synthetic records; sample k uses stream (seed, k)."""
    records = []
    for k in range(n):
        rng = np.random.default_rng(np.random.SeedSequence((seed, k)))
        records.append(synthesize_sample(cfg, rng, sample_id=f"synth{k:04d}"))
    return records


def load_refuge_format(root) -> list[SampleRecord]:
    """Load a dataset directory in the documented images/ + masks/ layout."""
    from .raster_io import load_image_png, load_mask_png

    root = Path(root)
    images_dir = root / "images"
    masks_dir = root / "masks"
    if not images_dir.is_dir() or not masks_dir.is_dir():
        raise IngestionError(f"{root}: expected images/ and masks/ subdirectories")
    stems = sorted(p.stem for p in images_dir.glob("*.png"))
    missing = [s for s in stems if not (masks_dir / f"{s}.png").exists()]
    if missing:
        raise IngestionError(f"{root}: images without masks: {', '.join(missing[:10])}"
                             + (" ..." if len(missing) > 10 else ""))
    records = []
    for stem in stems:
        img = load_image_png(images_dir / f"{stem}.png")
        if img.ndim == 2:
            img = np.repeat(img[:, :, None], 3, axis=2)
        disc, cup = decode_mask_gray(load_mask_png(masks_dir / f"{stem}.png"))
        records.append(SampleRecord.create(stem, img, disc, cup))
    return records


def split(records: list[SampleRecord], ratio: float = 0.8, seed: int = 0):
    """Deterministic shuffled split into (train, test); train gets floor(n * ratio)."""
    if not 0.0 < ratio < 1.0:
        raise InvalidArgumentError(f"split ratio must lie in (0, 1), got {ratio}")
    if not records:
        raise InvalidArgumentError("cannot split an empty record list")
    ordered = sorted(records, key=lambda r: r.id)
    perm = np.random.default_rng(seed).permutation(len(ordered))
    n_train = int(len(ordered) * ratio)
    train = [ordered[i] for i in perm[:n_train]]
    test = [ordered[i] for i in perm[n_train:]]
    return train, test


@dataclass
class PreprocessedSample:
    """Model-ready sample: warped image and masks plus the geometry to undo it."""

    id: str
    image: np.ndarray  # (S, S, 3) float32 in [0, 1]
    disc_mask: np.ndarray  # (S, S) bool
    cup_mask: np.ndarray  # (S, S) bool
    roi: RoiSpec  # in original-image coordinates
    orig_hw: tuple[int, int]
    domain: str = "polar"  # "polar" | "cartesian"


def preprocess(rec: SampleRecord, grid: PolarGrid = PolarGrid(), margin: float = 1.5,
               target_size: int = 256) -> PreprocessedSample:
    """Crop the disc ROI, warp to polar (bilinear image, nearest masks), resize."""
    crop_img, roi = crop_roi(rec.image, rec.disc_mask, margin=margin)
    local = roi_in_crop(roi)
    y0, x0, side = roi_crop_box(roi)
    nearest = PolarGrid(grid.num_radii, grid.num_angles, interpolation="nearest")
    pol_img = warp_to_polar(crop_img, local, grid)
    pol_disc = warp_to_polar(crop_square(rec.disc_mask.astype(np.float32), y0, x0, side),
                             local, nearest)
    pol_cup = warp_to_polar(crop_square(rec.cup_mask.astype(np.float32), y0, x0, side),
                            local, nearest)
    if (grid.num_radii, grid.num_angles) != (target_size, target_size):
        pol_img = resize_polar(pol_img, target_size, target_size, grid.interpolation)
        pol_disc = resize_polar(pol_disc, target_size, target_size, "nearest")
        pol_cup = resize_polar(pol_cup, target_size, target_size, "nearest")
    return PreprocessedSample(
        id=rec.id, image=pol_img.astype(np.float32),
        disc_mask=pol_disc > 0.5, cup_mask=pol_cup > 0.5,
        roi=roi, orig_hw=rec.image.shape[:2], domain="polar")


def preprocess_cartesian(rec: SampleRecord, margin: float = 1.5,
                         target_size: int = 256) -> PreprocessedSample:
    """Ablation path without the polar warp: crop the ROI square and resize."""
    crop_img, roi = crop_roi(rec.image, rec.disc_mask, margin=margin)
    y0, x0, side = roi_crop_box(roi)
    img = resize_cartesian(crop_img, target_size, target_size)
    disc = resize_cartesian(crop_square(rec.disc_mask.astype(np.float32), y0, x0, side),
                            target_size, target_size, "nearest")
    cup = resize_cartesian(crop_square(rec.cup_mask.astype(np.float32), y0, x0, side),
                           target_size, target_size, "nearest")
    return PreprocessedSample(
        id=rec.id, image=img.astype(np.float32),
        disc_mask=disc > 0.5, cup_mask=cup > 0.5,
        roi=roi, orig_hw=rec.image.shape[:2], domain="cartesian")


def compute_channel_stats(samples: list[PreprocessedSample]) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and std over every pixel of the given (training) samples."""
    if not samples:
        raise InvalidArgumentError("cannot compute statistics over zero samples")
    stacked = np.stack([s.image for s in samples])
    mean = stacked.mean(axis=(0, 1, 2))
    std = np.maximum(stacked.std(axis=(0, 1, 2)), 1e-6)
    return mean.astype(np.float32), std.astype(np.float32)


def normalize_image(image: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    return ((image - mean) / std).astype(np.float32)


def sample_prompt_rng(seed: int, *context: int) -> np.random.Generator:
    """Deterministic per-(epoch, sample) stream for prompt draws."""
    return np.random.default_rng(np.random.SeedSequence((seed, *context)))
