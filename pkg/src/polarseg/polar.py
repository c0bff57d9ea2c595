"""Cartesian/polar coordinate conversions, ROI cropping, and image warps.

Conventions
-----------
Rasters are numpy arrays, channels-last: ``(H, W)`` or ``(H, W, C)`` with
values in ``[0, 1]``. ``x`` indexes columns, ``y`` rows. Angles are measured
from the +x axis toward +y (downward on screen) and normalized to
``[0, 2*pi)``.

A polar raster has radius on the row axis (row 0 is ``r = 0``, the last row
is ``r = roi.radius``) and angle on the column axis (columns sample
``[0, 2*pi)`` uniformly, without duplicating the seam). Concentric
structures around the ROI center therefore become horizontal bands, which
evens out the area share of small central structures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .exceptions import EmptyMaskError, InvalidArgumentError

TWO_PI = 2.0 * math.pi

_INTERP_ORDER = {"bilinear": 1, "nearest": 0}


@dataclass(frozen=True)
class RoiSpec:
    """Circular region of interest: origin of the polar frame plus radius (pixels)."""

    center_x: float
    center_y: float
    radius: float

    def __post_init__(self):
        vals = (self.center_x, self.center_y, self.radius)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidArgumentError(f"non-finite RoiSpec fields: {vals}")
        if self.radius <= 0:
            raise InvalidArgumentError(f"ROI radius must be > 0, got {self.radius}")


@dataclass(frozen=True)
class PolarGrid:
    """Sampling resolution of the polar raster."""

    num_radii: int = 512
    num_angles: int = 512
    interpolation: str = "bilinear"

    def __post_init__(self):
        if self.num_radii < 2 or self.num_angles < 2:
            raise InvalidArgumentError("polar grid needs at least 2 radii and 2 angles")
        if self.interpolation not in _INTERP_ORDER:
            raise InvalidArgumentError(
                f"interpolation must be one of {sorted(_INTERP_ORDER)}, got {self.interpolation!r}")


def cart_to_polar_point(x: float, y: float, roi: RoiSpec) -> tuple[float, float]:
    """Map an image point to (r, theta) about the ROI center; theta in [0, 2*pi)."""
    if not (math.isfinite(x) and math.isfinite(y)):
        raise InvalidArgumentError(f"non-finite point ({x}, {y})")
    dx = x - roi.center_x
    dy = y - roi.center_y
    r = math.hypot(dx, dy)
    theta = math.atan2(dy, dx) % TWO_PI
    if theta >= TWO_PI:  # rounding of tiny negative angles can land exactly on 2*pi
        theta = 0.0
    return r, theta


def polar_to_cart_point(r: float, theta: float, roi: RoiSpec) -> tuple[float, float]:
    """Inverse of :func:`cart_to_polar_point`."""
    if not (math.isfinite(r) and math.isfinite(theta)):
        raise InvalidArgumentError(f"non-finite polar point ({r}, {theta})")
    if r < 0:
        raise InvalidArgumentError(f"radius must be >= 0, got {r}")
    return roi.center_x + r * math.cos(theta), roi.center_y + r * math.sin(theta)


def _sample(img: np.ndarray, ys: np.ndarray, xs: np.ndarray, order: int) -> np.ndarray:
    """Sample img at continuous (ys, xs); out-of-range coordinates clamp to the edge."""
    if img.ndim == 2:
        return ndimage.map_coordinates(img, [ys, xs], order=order, mode="nearest")
    out = np.empty(ys.shape + (img.shape[2],), dtype=img.dtype)
    for c in range(img.shape[2]):
        out[..., c] = ndimage.map_coordinates(img[..., c], [ys, xs], order=order, mode="nearest")
    return out


def warp_to_polar(img: np.ndarray, roi: RoiSpec, grid: PolarGrid = PolarGrid()) -> np.ndarray:
    """Resample a Cartesian raster onto the (r, theta) grid of `roi`.

    Row i samples radius ``i * roi.radius / (num_radii - 1)``, column j samples
    angle ``j * 2*pi / num_angles``.
    """
    img = np.asarray(img)
    if img.ndim not in (2, 3):
        raise InvalidArgumentError(f"raster must be 2D or 3D, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise InvalidArgumentError("raster contains non-finite values")
    radii = np.linspace(0.0, roi.radius, grid.num_radii)
    angles = np.arange(grid.num_angles) * (TWO_PI / grid.num_angles)
    xs = roi.center_x + radii[:, None] * np.cos(angles)[None, :]
    ys = roi.center_y + radii[:, None] * np.sin(angles)[None, :]
    return _sample(img, ys, xs, _INTERP_ORDER[grid.interpolation])


def warp_to_cartesian(pimg: np.ndarray, roi: RoiSpec, out_h: int, out_w: int,
                      interpolation: str = "bilinear") -> np.ndarray:
    """Resample a polar raster back onto an (out_h, out_w) Cartesian frame.

    Every output pixel inside the ROI circle samples the polar raster at its
    own (r, theta); pixels outside the circle are 0. The angle axis wraps at
    the seam.
    """
    pimg = np.asarray(pimg)
    if out_h < 1 or out_w < 1:
        raise InvalidArgumentError(f"output size must be >= 1, got {out_h}x{out_w}")
    if pimg.ndim not in (2, 3):
        raise InvalidArgumentError(f"polar raster must be 2D or 3D, got shape {pimg.shape}")
    if interpolation not in _INTERP_ORDER:
        raise InvalidArgumentError(f"unknown interpolation {interpolation!r}")
    num_radii, num_angles = pimg.shape[:2]
    ys, xs = np.mgrid[0:out_h, 0:out_w].astype(np.float64)
    dx = xs - roi.center_x
    dy = ys - roi.center_y
    r = np.hypot(dx, dy)
    theta = np.arctan2(dy, dx) % TWO_PI
    theta[theta >= TWO_PI] = 0.0

    # duplicate the seam column so interpolation can wrap via edge clamping
    wrapped = np.concatenate([pimg, pimg[:, :1]], axis=1)
    rows = r * ((num_radii - 1) / roi.radius)
    cols = theta * (num_angles / TWO_PI)
    out = _sample(wrapped, rows, cols, _INTERP_ORDER[interpolation])
    inside = r <= roi.radius
    if out.ndim == 3:
        inside = inside[..., None]
    return np.where(inside, out, 0).astype(pimg.dtype, copy=False)


def mask_bbox_and_centroid(mask: np.ndarray) -> tuple[tuple[int, int, int, int], tuple[float, float]]:
    """Bounding box (y0, y1, x0, x1 inclusive) and centroid (cy, cx) of a binary mask."""
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        raise EmptyMaskError("mask has no foreground pixels")
    return ((int(ys.min()), int(ys.max()), int(xs.min()), int(xs.max())),
            (float(ys.mean()), float(xs.mean())))


def roi_crop_box(roi: RoiSpec) -> tuple[int, int, int]:
    """Axis-aligned square covering the ROI: (y0, x0, side) in source coordinates."""
    side = int(round(2.0 * roi.radius)) + 1
    y0 = int(round(roi.center_y - roi.radius))
    x0 = int(round(roi.center_x - roi.radius))
    return y0, x0, side


def crop_square(img: np.ndarray, y0: int, x0: int, side: int) -> np.ndarray:
    """Extract a square crop, zero-padding where it leaves the source frame."""
    shape = (side, side) + img.shape[2:]
    out = np.zeros(shape, dtype=img.dtype)
    ys0, xs0 = max(y0, 0), max(x0, 0)
    ys1, xs1 = min(y0 + side, img.shape[0]), min(x0 + side, img.shape[1])
    if ys1 > ys0 and xs1 > xs0:
        out[ys0 - y0:ys1 - y0, xs0 - x0:xs1 - x0] = img[ys0:ys1, xs0:xs1]
    return out


def crop_roi(img: np.ndarray, disc_mask: np.ndarray, margin: float = 1.5) -> tuple[np.ndarray, RoiSpec]:
    """Crop the square region around a structure mask.

    The ROI center is the mask centroid; the radius is ``margin`` times half
    the larger bounding-box side (side measured as a pixel count). Returns
    the zero-padded square crop and the ROI in source-image coordinates.
    """
    img = np.asarray(img)
    if margin <= 0:
        raise InvalidArgumentError(f"margin must be > 0, got {margin}")
    (y0, y1, x0, x1), (cy, cx) = mask_bbox_and_centroid(np.asarray(disc_mask))
    side = max(y1 - y0 + 1, x1 - x0 + 1)
    radius = margin * side / 2.0
    if radius < 1.0:
        raise EmptyMaskError(f"degenerate ROI: radius {radius:.3f} px is below 1 px")
    roi = RoiSpec(center_x=cx, center_y=cy, radius=radius)
    by0, bx0, bside = roi_crop_box(roi)
    return crop_square(img, by0, bx0, bside), roi


def roi_in_crop(roi: RoiSpec) -> RoiSpec:
    """Express an ROI in the coordinates of its own :func:`roi_crop_box` crop."""
    y0, x0, _ = roi_crop_box(roi)
    return RoiSpec(center_x=roi.center_x - x0, center_y=roi.center_y - y0, radius=roi.radius)


def resize_polar(pimg: np.ndarray, num_radii: int, num_angles: int,
                 interpolation: str = "bilinear") -> np.ndarray:
    """Resample a polar raster to a new grid.

    The radius axis keeps its endpoints (r = 0 and r = radius map exactly);
    the angle axis is periodic and keeps column 0 at theta = 0.
    """
    pimg = np.asarray(pimg)
    if num_radii < 2 or num_angles < 2:
        raise InvalidArgumentError("resize target needs at least 2 radii and 2 angles")
    if interpolation not in _INTERP_ORDER:
        raise InvalidArgumentError(f"unknown interpolation {interpolation!r}")
    src_r, src_t = pimg.shape[:2]
    rows = np.linspace(0.0, src_r - 1, num_radii)
    cols = np.arange(num_angles) * (src_t / num_angles)
    wrapped = np.concatenate([pimg, pimg[:, :1]], axis=1)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return _sample(wrapped, rr, cc, _INTERP_ORDER[interpolation])


def resize_cartesian(img: np.ndarray, out_h: int, out_w: int,
                     interpolation: str = "bilinear") -> np.ndarray:
    """Endpoint-aligned resize of a Cartesian raster."""
    img = np.asarray(img)
    if out_h < 1 or out_w < 1:
        raise InvalidArgumentError(f"output size must be >= 1, got {out_h}x{out_w}")
    if interpolation not in _INTERP_ORDER:
        raise InvalidArgumentError(f"unknown interpolation {interpolation!r}")
    rows = np.linspace(0.0, img.shape[0] - 1, out_h)
    cols = np.linspace(0.0, img.shape[1] - 1, out_w)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return _sample(img, rr, cc, _INTERP_ORDER[interpolation])
