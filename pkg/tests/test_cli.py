"""End-to-end command-line tests at tiny scale: determinism, resume, exit codes."""

import hashlib
from pathlib import Path

import numpy as np
import pytest

from polarseg.cli import main
from polarseg.config import load_config, preset
from polarseg.checkpoint import load_checkpoint
from polarseg.train import preprocess_records


def run_cli(*argv):
    return main([str(a) for a in argv])


def dir_digest(root: Path) -> str:
    h = hashlib.sha256()
    for path in sorted(root.rglob("*")):
        if path.is_file():
            h.update(path.relative_to(root).as_posix().encode())
            h.update(path.read_bytes())
    return h.hexdigest()


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data") / "set"
    assert run_cli("synth", "--preset", "tiny", "--out", root, "--n", "10", "--seed", "5") == 0
    return root


class TestSynth:
    def test_writes_layout(self, dataset):
        assert sorted(p.name for p in (dataset / "images").glob("*.png")) == \
            [f"synth{i:04d}.png" for i in range(10)]
        assert (dataset / "manifest.json").exists()

    def test_byte_identical_given_seed(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert run_cli("synth", "--preset", "tiny", "--out", out, "--n", "4",
                           "--seed", "9") == 0
        assert dir_digest(a) == dir_digest(b)

    def test_low_contrast_gap_measured(self, tmp_path):
        out = tmp_path / "low"
        assert run_cli("synth", "--preset", "tiny", "--out", out, "--n", "3",
                       "--seed", "2", "--contrast", "low") == 0
        from polarseg.data import load_refuge_format
        for rec in load_refuge_format(out):
            gray = rec.image.mean(axis=2)
            rim = rec.disc_mask & ~rec.cup_mask
            gap = float(gray[rim].mean() - gray[~rec.disc_mask].mean())
            assert gap <= 0.08


class TestTrain:
    def test_smoke_run_writes_artifacts(self, dataset, tmp_path):
        out = tmp_path / "run"
        assert run_cli("train", "--preset", "tiny", "--data", dataset, "--out", out,
                       "--seed", "5", "--epochs", "1") == 0
        assert (out / "checkpoint.psc").exists()
        assert (out / "loss_log.tsv").read_text().startswith("step\tl_disk")
        saved = load_config(out / "run_config.txt")
        assert saved.epochs == 1 and saved.seed == 5

    def test_loss_decreases_over_epochs(self, dataset, tmp_path):
        from polarseg.train import train_run
        import dataclasses

        cfg = dataclasses.replace(preset("tiny"), dataset_root=str(dataset),
                                  out_dir=str(tmp_path / "run"), seed=5, epochs=5)
        result = train_run(cfg, log=lambda m: None)
        assert result.epoch_history[4]["total"] < result.epoch_history[0]["total"]

    def test_resume_matches_unbroken_run(self, dataset, tmp_path):
        straight = tmp_path / "straight"
        resumed = tmp_path / "resumed"
        assert run_cli("train", "--preset", "tiny", "--data", dataset, "--out", straight,
                       "--seed", "5", "--epochs", "2") == 0
        assert run_cli("train", "--preset", "tiny", "--data", dataset, "--out", resumed,
                       "--seed", "5", "--epochs", "1") == 0
        assert run_cli("train", "--preset", "tiny", "--data", dataset, "--out", resumed,
                       "--seed", "5", "--epochs", "2", "--resume") == 0
        import dataclasses

        a = load_checkpoint(straight / "checkpoint.psc")
        b = load_checkpoint(resumed / "checkpoint.psc")
        assert set(a.arrays) == set(b.arrays)
        for name in a.arrays:
            assert np.array_equal(a.arrays[name], b.arrays[name]), name
        assert dataclasses.replace(a.run_config, out_dir="") == \
            dataclasses.replace(b.run_config, out_dir="")  # only the output path differs

    def test_norm_stats_come_from_training_split(self, dataset, tmp_path):
        from polarseg.data import compute_channel_stats, load_refuge_format, split
        import dataclasses

        out = tmp_path / "run"
        assert run_cli("train", "--preset", "tiny", "--data", dataset, "--out", out,
                       "--seed", "5", "--epochs", "1") == 0
        ckpt = load_checkpoint(out / "checkpoint.psc")
        cfg = dataclasses.replace(preset("tiny"), dataset_root=str(dataset), seed=5)
        records = load_refuge_format(dataset)
        train_recs, _ = split(records, cfg.split_ratio, cfg.seed)
        mean_train, _ = compute_channel_stats(preprocess_records(train_recs, cfg))
        np.testing.assert_allclose(ckpt.norm_mean, mean_train, rtol=1e-6)
        mean_all, _ = compute_channel_stats(preprocess_records(records, cfg))
        assert not np.allclose(ckpt.norm_mean, mean_all)


class TestEvalAndDeterminism:
    def test_full_chain_byte_identical(self, tmp_path):
        digests = []
        for tag in ("one", "two"):
            root = tmp_path / tag
            assert run_cli("synth", "--preset", "tiny", "--out", root / "data",
                           "--n", "10", "--seed", "7") == 0
            assert run_cli("train", "--preset", "tiny", "--data", root / "data",
                           "--out", root / "run", "--seed", "7", "--epochs", "2") == 0
            assert run_cli("eval", "--checkpoint", root / "run" / "checkpoint.psc",
                           "--data", root / "data", "--out", root / "eval") == 0
            digests.append((root / "eval" / "metrics.tsv").read_bytes())
        assert digests[0] == digests[1]

    def test_eval_outputs(self, dataset, tmp_path):
        run = tmp_path / "run"
        assert run_cli("train", "--preset", "tiny", "--data", dataset, "--out", run,
                       "--seed", "5", "--epochs", "1") == 0
        out = tmp_path / "eval"
        assert run_cli("eval", "--checkpoint", run / "checkpoint.psc", "--data", dataset,
                       "--out", out, "--export-masks", "--overlays", "1") == 0
        table = (out / "metrics.tsv").read_text()
        assert table.startswith("structure\tdice\tiou")
        assert (out / "metrics.json").exists()
        masks = list((out / "masks").glob("*.png"))
        assert masks and all(m.stat().st_size > 0 for m in masks)
        assert len(list((out / "overlays").glob("*.png"))) == 1

    def test_missing_checkpoint_is_user_error(self, dataset, tmp_path):
        code = run_cli("eval", "--checkpoint", tmp_path / "nope.psc", "--data", dataset,
                       "--out", tmp_path / "e")
        assert code == 1

    def test_empty_split_is_user_error(self, tmp_path):
        root = tmp_path / "single"
        assert run_cli("synth", "--preset", "tiny", "--out", root / "data", "--n", "2",
                       "--seed", "3") == 0
        assert run_cli("train", "--preset", "tiny", "--data", root / "data",
                       "--out", root / "run", "--seed", "3", "--epochs", "1") == 0
        # a 2-sample set at ratio 0.8 leaves 1 train / 1 test; "train" split of a
        # 1-sample set at the same seed is fine, so force emptiness via n=1 eval
        single = tmp_path / "one"
        assert run_cli("synth", "--preset", "tiny", "--out", single / "data", "--n", "1",
                       "--seed", "3") == 0
        code = run_cli("eval", "--checkpoint", root / "run" / "checkpoint.psc",
                       "--data", single / "data", "--out", single / "e", "--split", "train")
        assert code == 1

    def test_usage_error_exit_code(self):
        with pytest.raises(SystemExit) as exc:
            run_cli("trian")
        assert exc.value.code == 1


class TestAblate:
    def test_five_rows_shared_seed(self, tmp_path):
        root = tmp_path / "abl"
        assert run_cli("synth", "--preset", "tiny", "--out", root / "data", "--n", "8",
                       "--seed", "11") == 0
        assert run_cli("ablate", "--preset", "tiny", "--data", root / "data",
                       "--out", root / "out", "--seed", "11", "--epochs", "2") == 0
        lines = (root / "out" / "ablation.tsv").read_text().strip().splitlines()
        assert lines[0].split("\t") == ["row", "cbam", "adapter", "polar", "seed",
                                        "disc_dice", "disc_iou", "cup_dice", "cup_iou"]
        assert len(lines) == 6  # header + five rows
        rows = [line.split("\t") for line in lines[1:]]
        assert [r[0] for r in rows] == ["base_only", "cbam_adapter", "cbam_pt",
                                        "adapter_pt", "all_modules"]
        assert {r[4] for r in rows} == {"11"}  # every row trains with the same seed
        for r in rows:
            for value in r[5:]:
                assert 0.0 <= float(value) <= 1.0
        toggles = {(r[1], r[2], r[3]) for r in rows}
        assert ("yes", "yes", "yes") in toggles and ("no", "no", "no") in toggles


class TestInspectPreprocessVisualize:
    def test_inspect_checkpoint(self, dataset, tmp_path, capsys):
        run = tmp_path / "run"
        assert run_cli("train", "--preset", "tiny", "--data", dataset, "--out", run,
                       "--seed", "5", "--epochs", "1") == 0
        assert run_cli("inspect", "--checkpoint", run / "checkpoint.psc") == 0
        out = capsys.readouterr().out
        assert "base_encoder" in out and "trainable fraction" in out

    def test_inspect_accounting_fraction(self, capsys):
        assert run_cli("inspect", "--accounting", "--mode", "peft") == 0
        out = capsys.readouterr().out
        fraction = float(out.strip().rsplit(" ", 1)[-1])
        assert fraction < 0.05

    def test_preprocess_writes_polar_artifacts(self, dataset, tmp_path):
        out = tmp_path / "pre"
        assert run_cli("preprocess", "--preset", "tiny", "--data", dataset,
                       "--out", out, "--limit", "2") == 0
        names = sorted(p.name for p in out.iterdir())
        assert "rois.json" in names
        assert "synth0000_polar.png" in names and "synth0000_polar.psr" in names
        from polarseg.raster_io import load_raster
        arr = load_raster(out / "synth0000_polar.psr")
        assert arr.shape == (64, 64, 3) and arr.dtype == np.float32

    def test_visualize_deterministic_bytes(self, dataset, tmp_path):
        run = tmp_path / "run"
        assert run_cli("train", "--preset", "tiny", "--data", dataset, "--out", run,
                       "--seed", "5", "--epochs", "1") == 0
        outs = []
        for tag in ("a", "b"):
            panel = tmp_path / f"{tag}.png"
            assert run_cli("visualize", "--checkpoint", run / "checkpoint.psc",
                           "--data", dataset, "--id", "synth0001", "--out", panel) == 0
            outs.append(panel.read_bytes())
        assert outs[0] == outs[1]

    def test_visualize_unknown_id(self, dataset, tmp_path):
        run = tmp_path / "run"
        assert run_cli("train", "--preset", "tiny", "--data", dataset, "--out", run,
                       "--seed", "5", "--epochs", "1") == 0
        code = run_cli("visualize", "--checkpoint", run / "checkpoint.psc",
                       "--data", dataset, "--id", "ghost", "--out", tmp_path / "g.png")
        assert code == 1


class TestWorkerEnv:
    def test_parallel_preprocess_matches_serial(self, dataset, monkeypatch):
        from polarseg.data import load_refuge_format

        cfg = preset("tiny")
        records = load_refuge_format(dataset)[:4]
        serial = preprocess_records(records, cfg)
        monkeypatch.setenv("POLARSEG_WORKERS", "2")
        parallel = preprocess_records(records, cfg)
        for s, p in zip(serial, parallel):
            assert s.id == p.id
            assert np.array_equal(s.image, p.image)
            assert np.array_equal(s.disc_mask, p.disc_mask)

    def test_invalid_worker_env(self, monkeypatch):
        from polarseg.exceptions import InvalidArgumentError
        from polarseg.train import worker_count

        monkeypatch.setenv("POLARSEG_WORKERS", "many")
        with pytest.raises(InvalidArgumentError):
            worker_count()
