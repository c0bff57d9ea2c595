"""Dataset tests: synthesis invariants, directory I/O, splitting, preprocessing."""

from types import SimpleNamespace

import numpy as np
import pytest

from polarseg.data import (
    PreprocessedSample,
    SampleRecord,
    SyntheticConfig,
    compute_channel_stats,
    decode_mask_gray,
    encode_mask_gray,
    load_refuge_format,
    normalize_image,
    preprocess,
    preprocess_cartesian,
    split,
    synthesize_dataset,
    synthesize_sample,
    write_dataset,
)
from polarseg.exceptions import IngestionError, InvalidArgumentError
from polarseg.losses import containment_loss
from polarseg.metrics import cdr, dice
from polarseg.polar import PolarGrid, warp_to_cartesian
from polarseg.raster_io import save_image_png


class TestSynthesize:
    def test_fixed_ratio_vertical_diameters(self):
        cfg = SyntheticConfig(cup_ratio_range=(0.4, 0.4), noise_sigma=0.0,
                              vessel_count=0, center_jitter=0.0)
        rec = synthesize_sample(cfg, np.random.default_rng(1))
        measured = cdr(rec.disc_mask, rec.cup_mask)
        assert abs(measured - 0.4) <= 0.02

    def test_containment_always_zero(self):
        for seed in range(10):
            cfg = SyntheticConfig(cup_ratio_range=(0.35, 0.7))
            rec = synthesize_sample(cfg, np.random.default_rng(seed))
            assert containment_loss(rec.cup_mask.astype(float),
                                    rec.disc_mask.astype(float), mode="count") == 0

    def test_cdr_tracks_configured_ratio(self):
        errors = []
        for seed in range(30):
            ratio = 0.5
            cfg = SyntheticConfig(cup_ratio_range=(ratio, ratio))
            rec = synthesize_sample(cfg, np.random.default_rng(seed))
            errors.append(abs(cdr(rec.disc_mask, rec.cup_mask) - ratio))
        assert max(errors) <= 0.02

    def test_low_contrast_gap(self):
        cfg = SyntheticConfig(contrast="low", noise_sigma=0.0)
        rec = synthesize_sample(cfg, np.random.default_rng(3))
        gray = rec.image.mean(axis=2)
        rim = rec.disc_mask & ~rec.cup_mask
        gap = float(gray[rim].mean() - gray[~rec.disc_mask].mean())
        assert 0.0 < gap <= 0.08

    def test_high_contrast_brightness_ordering(self):
        cfg = SyntheticConfig(contrast="high", noise_sigma=0.0, vessel_count=0)
        rec = synthesize_sample(cfg, np.random.default_rng(4))
        gray = rec.image.mean(axis=2)
        rim = rec.disc_mask & ~rec.cup_mask
        assert gray[rec.cup_mask].mean() > gray[rim].mean() > gray[~rec.disc_mask].mean()

    def test_values_in_unit_range(self):
        rec = synthesize_sample(SyntheticConfig(), np.random.default_rng(5))
        assert rec.image.min() >= 0.0 and rec.image.max() <= 1.0
        assert rec.image.dtype == np.float32

    def test_deterministic_given_seed(self):
        a = synthesize_dataset(SyntheticConfig(), 3, seed=11)
        b = synthesize_dataset(SyntheticConfig(), 3, seed=11)
        for ra, rb in zip(a, b):
            assert np.array_equal(ra.image, rb.image)
            assert np.array_equal(ra.disc_mask, rb.disc_mask)

    def test_config_validation(self):
        with pytest.raises(InvalidArgumentError):
            SyntheticConfig(cup_ratio_range=(0.5, 1.0))
        with pytest.raises(InvalidArgumentError):
            SyntheticConfig(contrast="medium")


class TestMaskConvention:
    def test_encode_decode_round_trip(self):
        rng = np.random.default_rng(7)
        disc = rng.uniform(size=(16, 16)) > 0.5
        cup = disc & (rng.uniform(size=(16, 16)) > 0.5)
        gray = encode_mask_gray(disc, cup)
        assert set(np.unique(gray)) <= {0, 128, 255}
        disc2, cup2 = decode_mask_gray(gray)
        assert np.array_equal(disc, disc2) and np.array_equal(cup, cup2)

    def test_crafted_three_value_mask(self):
        gray = np.full((8, 8), 255, dtype=np.uint8)
        gray[2:6, 2:6] = 128
        gray[3:5, 3:5] = 0
        disc, cup = decode_mask_gray(gray)
        assert np.array_equal(disc, gray <= 128)
        assert np.array_equal(cup, gray == 0)
        assert disc.sum() == 16 and cup.sum() == 4

    def test_unexpected_values_warn(self):
        gray = np.full((4, 4), 255, dtype=np.uint8)
        gray[0, 0] = 64  # counts as disc under the <=128 rule
        with pytest.warns(UserWarning):
            disc, _ = decode_mask_gray(gray)
        assert disc[0, 0]

    def test_containment_auto_fix(self):
        img = np.zeros((8, 8, 3), dtype=np.float32)
        disc = np.zeros((8, 8), dtype=bool)
        disc[2:5, 2:5] = True
        cup = np.zeros((8, 8), dtype=bool)
        cup[3, 3] = True
        cup[7, 7] = True  # stray pixel outside the disc
        with pytest.warns(UserWarning):
            rec = SampleRecord.create("bad", img, disc, cup)
        assert not rec.cup_mask[7, 7] and rec.cup_mask[3, 3]
        with pytest.raises(InvalidArgumentError):
            SampleRecord.create("bad", img, disc, cup, fix_containment=False)


class TestDatasetIO:
    def test_write_and_load_round_trip(self, tmp_path):
        records = synthesize_dataset(SyntheticConfig(image_size=64,
                                                     disc_axis_range=(10, 16)), 4, seed=3)
        write_dataset(records, tmp_path, manifest_extra={"seed": 3})
        loaded = load_refuge_format(tmp_path)
        assert [r.id for r in loaded] == [r.id for r in records]
        for orig, back in zip(records, loaded):
            assert np.array_equal(orig.disc_mask, back.disc_mask)
            assert np.array_equal(orig.cup_mask, back.cup_mask)
            assert np.max(np.abs(orig.image - back.image)) <= 1.0 / 255.0 + 1e-6

    def test_empty_directory_gives_empty_list(self, tmp_path):
        (tmp_path / "images").mkdir()
        (tmp_path / "masks").mkdir()
        assert load_refuge_format(tmp_path) == []

    def test_missing_layout_rejected(self, tmp_path):
        with pytest.raises(IngestionError):
            load_refuge_format(tmp_path)

    def test_missing_mask_names_stem(self, tmp_path):
        (tmp_path / "images").mkdir()
        (tmp_path / "masks").mkdir()
        save_image_png(tmp_path / "images" / "orphan.png", np.zeros((8, 8, 3)))
        with pytest.raises(IngestionError, match="orphan"):
            load_refuge_format(tmp_path)


class TestSplit:
    def _records(self, n):
        return [SimpleNamespace(id=f"r{i:04d}") for i in range(n)]

    def test_published_ratio(self):
        train, test = split(self._records(1200), ratio=0.8, seed=1)
        assert len(train) == 960 and len(test) == 240

    def test_small_case(self):
        train, test = split(self._records(10), ratio=0.8, seed=2)
        assert len(train) == 8 and len(test) == 2

    def test_deterministic_and_disjoint(self):
        records = self._records(50)
        for seed in (0, 7, 123):
            t1, e1 = split(records, 0.8, seed)
            t2, e2 = split(records, 0.8, seed)
            assert [r.id for r in t1] == [r.id for r in t2]
            assert [r.id for r in e1] == [r.id for r in e2]
            ids_train = {r.id for r in t1}
            ids_test = {r.id for r in e1}
            assert not ids_train & ids_test
            assert len(ids_train | ids_test) == 50

    def test_validation(self):
        with pytest.raises(InvalidArgumentError):
            split([], 0.8, 0)
        with pytest.raises(InvalidArgumentError):
            split(self._records(4), 1.0, 0)


class TestPreprocess:
    def _record(self, seed=9):
        cfg = SyntheticConfig(image_size=128, disc_axis_range=(20, 30), noise_sigma=0.0)
        return synthesize_sample(cfg, np.random.default_rng(seed))

    def test_polar_disc_is_band_from_row_zero(self):
        pre = preprocess(self._record(), PolarGrid(128, 128), target_size=64)
        assert pre.disc_mask[0].all()  # the ROI center lies inside the disc
        # per-column foreground is one contiguous band starting at row 0
        for col in range(pre.disc_mask.shape[1]):
            column = pre.disc_mask[:, col]
            k = int(column.sum())
            assert column[:k].all() and not column[k:].any()

    def test_masks_stay_binary_and_nested(self):
        pre = preprocess(self._record(10), PolarGrid(128, 128), target_size=64)
        assert pre.disc_mask.dtype == bool and pre.cup_mask.dtype == bool
        assert not np.any(pre.cup_mask & ~pre.disc_mask)

    def test_round_trip_dice(self):
        rec = self._record(11)
        pre = preprocess(rec, PolarGrid(256, 256), target_size=256)
        back = warp_to_cartesian(pre.disc_mask.astype(np.float32), pre.roi,
                                 *pre.orig_hw, interpolation="nearest") > 0.5
        assert dice(back, rec.disc_mask) >= 0.98

    def test_resize_path_matches_direct_grid(self):
        rec = self._record(12)
        resized = preprocess(rec, PolarGrid(128, 128), target_size=64)
        direct = preprocess(rec, PolarGrid(64, 64), target_size=64)
        assert resized.image.shape == direct.image.shape == (64, 64, 3)
        # same geometry, different sampling density; structures agree closely
        assert dice(resized.disc_mask, direct.disc_mask) > 0.95

    def test_cartesian_path(self):
        rec = self._record(13)
        pre = preprocess_cartesian(rec, target_size=64)
        assert pre.domain == "cartesian"
        assert pre.image.shape == (64, 64, 3)
        assert pre.disc_mask.any() and not np.any(pre.cup_mask & ~pre.disc_mask)

    def test_degenerate_roi_propagates(self):
        img = np.zeros((32, 32, 3), dtype=np.float32)
        mask = np.zeros((32, 32), dtype=bool)
        mask[5, 5] = True
        rec = SampleRecord.create("deg", img, mask, mask)
        from polarseg.exceptions import EmptyMaskError
        with pytest.raises(EmptyMaskError):
            preprocess(rec, PolarGrid(64, 64), target_size=32)


class TestNormalization:
    def test_stats_and_apply(self):
        samples = [PreprocessedSample(
            id=str(i),
            image=np.random.default_rng(i).uniform(size=(8, 8, 3)).astype(np.float32),
            disc_mask=np.ones((8, 8), bool), cup_mask=np.zeros((8, 8), bool),
            roi=None, orig_hw=(8, 8)) for i in range(4)]
        mean, std = compute_channel_stats(samples)
        stacked = np.stack([normalize_image(s.image, mean, std) for s in samples])
        np.testing.assert_allclose(stacked.mean(axis=(0, 1, 2)), 0.0, atol=1e-5)
        np.testing.assert_allclose(stacked.std(axis=(0, 1, 2)), 1.0, atol=1e-4)

    def test_empty_rejected(self):
        with pytest.raises(InvalidArgumentError):
            compute_channel_stats([])
