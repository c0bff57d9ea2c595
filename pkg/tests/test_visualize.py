"""Contour extraction and panel composition."""

import numpy as np
import pytest

from polarseg.exceptions import InvalidArgumentError
from polarseg.visualize import (
    compose_panels,
    contour_mask,
    draw_contours,
    prediction_rgb,
    sample_panel,
)


class TestContours:
    def test_boundary_only(self):
        mask = np.zeros((10, 10), dtype=bool)
        mask[2:8, 3:9] = True
        contour = contour_mask(mask)
        assert contour.sum() > 0
        assert np.all(mask[contour])  # contour lies on the foreground
        interior = np.zeros_like(mask)
        interior[3:7, 4:8] = True
        assert not np.any(contour & interior)  # never in the interior

    def test_empty_mask(self):
        assert not contour_mask(np.zeros((5, 5), dtype=bool)).any()

    def test_single_pixel_is_its_own_boundary(self):
        mask = np.zeros((5, 5), dtype=bool)
        mask[2, 2] = True
        assert np.array_equal(contour_mask(mask), mask)

    def test_draw_touches_only_boundaries(self):
        img = np.zeros((12, 12, 3), dtype=np.float32)
        disc = np.zeros((12, 12), dtype=bool)
        disc[2:10, 2:10] = True
        cup = np.zeros((12, 12), dtype=bool)
        cup[4:8, 4:8] = True
        out = draw_contours(img, disc, cup)
        changed = np.any(out != img, axis=2)
        expected = contour_mask(disc) | contour_mask(cup)
        assert np.array_equal(changed, expected)

    def test_requires_rgb(self):
        with pytest.raises(InvalidArgumentError):
            draw_contours(np.zeros((4, 4)), np.zeros((4, 4), bool), np.zeros((4, 4), bool))


class TestPanels:
    def test_four_subpanels_width(self):
        panels = [np.random.default_rng(i).uniform(size=(32, 32, 3)) for i in range(4)]
        canvas = compose_panels(panels, height=64)
        assert canvas.shape == (64, 4 * 64 + 3 * 2, 3)
        assert canvas.min() >= 0.0 and canvas.max() <= 1.0

    def test_grayscale_panels_promoted(self):
        canvas = compose_panels([np.zeros((16, 16)), np.ones((16, 16, 3))], height=16)
        assert canvas.shape[2] == 3

    def test_empty_rejected(self):
        with pytest.raises(InvalidArgumentError):
            compose_panels([])

    def test_prediction_rgb_channels(self):
        disc = np.full((4, 4), 0.8)
        cup = np.full((4, 4), 0.3)
        rgb = prediction_rgb(disc, cup)
        assert np.all(rgb[..., 1] == 0.8) and np.all(rgb[..., 0] == 0.3)
        assert np.all(rgb[..., 2] == 0.0)

    def test_sample_panel_layout(self):
        from types import SimpleNamespace

        rng = np.random.default_rng(3)
        rec = SimpleNamespace(image=rng.uniform(size=(48, 48, 3)).astype(np.float32))
        pre = SimpleNamespace(image=rng.uniform(size=(32, 32, 3)).astype(np.float32))
        probs = rng.uniform(size=(32, 32, 2))
        disc = rng.uniform(size=(48, 48)) > 0.6
        cup = disc & (rng.uniform(size=(48, 48)) > 0.5)
        panel = sample_panel(rec, pre, probs, disc, cup, height=64)
        assert panel.shape == (64, 4 * 64 + 3 * 2, 3)  # four square sub-images
