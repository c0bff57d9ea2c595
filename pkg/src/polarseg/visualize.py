"""Overlay panels: original image, polar view, polar prediction, contoured result."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .exceptions import InvalidArgumentError
from .polar import resize_cartesian

DISC_COLOR = np.array([0.1, 0.9, 0.2], dtype=np.float32)  # green
CUP_COLOR = np.array([0.95, 0.2, 0.15], dtype=np.float32)  # red
_SEPARATOR = 2  # pixels between panels


def contour_mask(mask: np.ndarray) -> np.ndarray:
    """Foreground boundary: pixels that vanish under one erosion step."""
    mask = np.asarray(mask).astype(bool)
    if not mask.any():
        return np.zeros_like(mask)
    eroded = ndimage.binary_erosion(mask, border_value=0)
    return mask & ~eroded


def draw_contours(img: np.ndarray, disc_mask: np.ndarray, cup_mask: np.ndarray) -> np.ndarray:
    """Paint disc (green) and cup (red) boundaries onto an RGB image copy."""
    img = np.asarray(img, dtype=np.float32)
    if img.ndim != 3 or img.shape[2] != 3:
        raise InvalidArgumentError(f"expected an RGB image, got shape {img.shape}")
    out = img.copy()
    out[contour_mask(disc_mask)] = DISC_COLOR
    out[contour_mask(cup_mask)] = CUP_COLOR
    return out


def _to_rgb(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float32)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    return img


def prediction_rgb(disc_prob: np.ndarray, cup_prob: np.ndarray) -> np.ndarray:
    """Two probability maps -> one RGB view (disc green channel, cup red channel)."""
    h, w = disc_prob.shape
    out = np.zeros((h, w, 3), dtype=np.float32)
    out[..., 1] = disc_prob
    out[..., 0] = cup_prob
    return out

def compose_panels(panels: list[np.ndarray], height: int = 256) -> np.ndarray:
    """Resize panels to a shared height and place them side by side."""
    if not panels:
        raise InvalidArgumentError("no panels to compose")
    resized = []
    for p in panels:
        p = _to_rgb(p)
        w = max(1, int(round(p.shape[1] * height / p.shape[0])))
        resized.append(np.clip(resize_cartesian(p, height, w), 0.0, 1.0))
    total_w = sum(p.shape[1] for p in resized) + _SEPARATOR * (len(resized) - 1)
    canvas = np.ones((height, total_w, 3), dtype=np.float32)
    x = 0
    for p in resized:
        canvas[:, x:x + p.shape[1]] = p
        x += p.shape[1] + _SEPARATOR
    return canvas


def sample_panel(record, pre, probs, disc_pred, cup_pred, height: int = 256) -> np.ndarray:
    """Standard four-panel view for one sample.

    Panels: original image, preprocessed (polar) image, raw two-channel
    prediction in the polar frame, and the original image with predicted
    disc/cup contours after the inverse transform.
    """
    panels = [
        record.image,
        pre.image,
        prediction_rgb(probs[..., 0], probs[..., 1]),
        draw_contours(record.image, disc_pred, cup_pred),
    ]
    return compose_panels(panels, height=height)
