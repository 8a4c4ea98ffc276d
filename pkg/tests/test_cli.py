from __future__ import annotations

import json

import numpy as np
import pytest
import yaml

from histopipe.cli import main
from histopipe.config import ConfigError, load_config, parse_config
from histopipe.presets import PRESETS, get_preset, preset_names
from histopipe.synthetic import generate_synthetic


def smoke_raw(data_root, run_dir, epochs=1):
    return {
        "dataset": {
            "root": str(data_root),
            "split": {"mode": "custom", "probs": [0.7, 0.2, 0.1], "seed": 3},
        },
        "preprocess": {"target_dims": [64, 64]},
        "model": {"backbone": "tiny", "head": "attention", "dropout": 0.1},
        "train": {
            "loss": {"kind": "cross_entropy"},
            "epochs": epochs,
            "batch_size": 14,
            "sampler": {"strategy": "batch_balanced", "seed": 0},
            "seed": 11,
            "cache_images": True,
        },
        "output": {"run_dir": str(run_dir)},
    }


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli") / "data"
    generate_synthetic(root, classes=7, per_class=12, image_dims=(64, 64), seed=4)
    return root


class TestSynthetic:
    def test_counts(self, tmp_path):
        out = generate_synthetic(tmp_path / "d", classes=7, per_class=20, image_dims=(32, 32))
        files = list(out.rglob("*.png"))
        assert len(files) == 140
        assert len([d for d in out.iterdir() if d.is_dir()]) == 7

    def test_bitwise_determinism(self, tmp_path):
        a = generate_synthetic(tmp_path / "a", classes=3, per_class=4, seed=9)
        b = generate_synthetic(tmp_path / "b", classes=3, per_class=4, seed=9)
        for pa, pb in zip(sorted(a.rglob("*.png")), sorted(b.rglob("*.png"))):
            assert pa.read_bytes() == pb.read_bytes()

    def test_different_seed_changes_pixels(self, tmp_path):
        a = generate_synthetic(tmp_path / "a", classes=1, per_class=1, seed=1)
        b = generate_synthetic(tmp_path / "b", classes=1, per_class=1, seed=2)
        pa, pb = next(a.rglob("*.png")), next(b.rglob("*.png"))
        assert pa.read_bytes() != pb.read_bytes()


class TestConfigValidation:
    def test_missing_model_section_names_it(self, tiny_dataset, tmp_path):
        raw = smoke_raw(tiny_dataset, tmp_path / "r")
        del raw["model"]
        with pytest.raises(ConfigError, match="'model'"):
            parse_config(raw, "test.yaml")

    def test_unknown_keys_rejected(self, tiny_dataset, tmp_path):
        raw = smoke_raw(tiny_dataset, tmp_path / "r")
        raw["train"]["warmup"] = 5
        with pytest.raises(ConfigError, match="warmup"):
            parse_config(raw, "test.yaml")

    def test_tiling_and_resize_mutually_exclusive(self, tiny_dataset, tmp_path):
        raw = smoke_raw(tiny_dataset, tmp_path / "r")
        raw["tiling"] = {"n_tiles": 4, "canvas_dims": [64, 64], "window_sizes": [16]}
        with pytest.raises(ConfigError, match="mutually exclusive"):
            parse_config(raw, "test.yaml")

    def test_tiling_mode_sets_model_input_dims(self, tiny_dataset, tmp_path):
        raw = smoke_raw(tiny_dataset, tmp_path / "r")
        del raw["preprocess"]["target_dims"]
        raw["tiling"] = {"n_tiles": 4, "canvas_dims": [96, 96], "window_sizes": [16],
                        "zoom_levels": 1}
        config = parse_config(raw, "test.yaml")
        assert config.model.input_dims == (96, 96)

    def test_yaml_file_round_trip(self, tiny_dataset, tmp_path):
        raw = smoke_raw(tiny_dataset, tmp_path / "r")
        path = tmp_path / "config.yaml"
        path.write_text(yaml.safe_dump(raw))
        config = load_config(path)
        assert config.model.backbone == "tiny"
        assert config.train.batch_size == 14

    def test_error_carries_source_path(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text(yaml.safe_dump({"dataset": {"root": "x"}}))
        with pytest.raises(ConfigError, match="bad.yaml"):
            load_config(path)


class TestPresets:
    def test_all_presets_parse_once_root_is_set(self, tmp_path):
        for name in preset_names():
            raw = get_preset(name)
            raw["dataset"]["root"] = str(tmp_path)
            raw["output"]["run_dir"] = str(tmp_path / "run")
            if raw.get("preprocess", {}).get("stain_norm") == "reference_based":
                continue  # needs a real reference tile
            config = parse_config(raw, name)
            assert config.run_dir == tmp_path / "run"

    def test_table7_best_row_preset_matches_reported_pipeline(self):
        raw = get_preset("table7_resnet50_focal_512")
        assert raw["model"]["backbone"] == "resnet50"
        assert raw["model"]["dropout"] == 0.45
        assert raw["preprocess"]["target_dims"] == [512, 512]
        assert raw["train"]["loss"]["kind"] == "focal"

    def test_upsample_preset_targets_2000(self):
        raw = get_preset("table6_resnet50_upsample2000")
        assert raw["dataset"]["upsample_target"] == 2000
        assert raw["dataset"]["split"]["probs"] == [0.9, 0.07, 0.03]

    def test_get_preset_returns_copies(self):
        a = get_preset("synthetic_smoke")
        a["model"]["backbone"] = "changed"
        assert PRESETS["synthetic_smoke"]["model"]["backbone"] != "changed"


class TestCliCommands:
    def test_synth_command(self, tmp_path, capsys):
        rc = main(["synth", "--out", str(tmp_path / "d"), "--classes", "3",
                   "--per-class", "2", "--dims", "16", "16"])
        assert rc == 0
        assert "6 images" in capsys.readouterr().out

    def test_prepare_writes_manifest_and_counts(self, tiny_dataset, tmp_path, capsys):
        raw = smoke_raw(tiny_dataset, tmp_path / "prep")
        config_path = tmp_path / "c.yaml"
        config_path.write_text(yaml.safe_dump(raw))
        rc = main(["prepare", "--config", str(config_path)])
        assert rc == 0
        assert (tmp_path / "prep" / "manifest.csv").is_file()
        assert "84 records" in capsys.readouterr().out

    def test_train_command_end_to_end(self, tiny_dataset, tmp_path, capsys):
        raw = smoke_raw(tiny_dataset, tmp_path / "run", epochs=2)
        config_path = tmp_path / "c.yaml"
        config_path.write_text(yaml.safe_dump(raw))
        rc = main(["train", "--config", str(config_path), "--dump-augmented", "3"])
        assert rc == 0
        run_dir = tmp_path / "run"
        for artifact in ("config.yaml", "metrics.jsonl", "best.pt", "last.pt",
                         "report.json", "confusion_matrix.csv", "confusion_matrix.png"):
            assert (run_dir / artifact).exists(), artifact
        assert len(list((run_dir / "augmented_samples").glob("*.png"))) == 3
        assert not (run_dir / "FAILED").exists()
        report = json.loads((run_dir / "report.json").read_text())
        assert report["split_evaluated"] == "test"

    def test_rerun_requires_resume_or_force(self, tiny_dataset, tmp_path, capsys):
        raw = smoke_raw(tiny_dataset, tmp_path / "run2")
        config_path = tmp_path / "c.yaml"
        config_path.write_text(yaml.safe_dump(raw))
        assert main(["train", "--config", str(config_path)]) == 0
        assert main(["train", "--config", str(config_path)]) == 2
        assert "resume" in capsys.readouterr().err
        assert main(["train", "--config", str(config_path), "--resume"]) == 0
        assert main(["train", "--config", str(config_path), "--force"]) == 0

    def test_malformed_config_nonzero_exit_names_section(self, tiny_dataset, tmp_path, capsys):
        raw = smoke_raw(tiny_dataset, tmp_path / "run3")
        del raw["model"]
        config_path = tmp_path / "broken.yaml"
        config_path.write_text(yaml.safe_dump(raw))
        rc = main(["train", "--config", str(config_path)])
        assert rc != 0
        err = capsys.readouterr().err
        assert "model" in err

    def test_missing_dataset_root_fails_on_stderr(self, tmp_path, capsys):
        raw = smoke_raw(tmp_path / "missing-data", tmp_path / "run4")
        config_path = tmp_path / "c.yaml"
        config_path.write_text(yaml.safe_dump(raw))
        rc = main(["train", "--config", str(config_path)])
        assert rc != 0
        assert "does not exist" in capsys.readouterr().err

    def test_partial_run_leaves_failure_marker(self, tiny_dataset, tmp_path, capsys):
        raw = smoke_raw(tiny_dataset, tmp_path / "run5")
        raw["train"]["batch_size"] = 13  # balanced sampler needs a multiple of 7
        config_path = tmp_path / "c.yaml"
        config_path.write_text(yaml.safe_dump(raw))
        rc = main(["train", "--config", str(config_path)])
        assert rc != 0
        marker = tmp_path / "run5" / "FAILED"
        assert marker.is_file()
        assert "divisible" in marker.read_text()
        # a successful retry clears the marker
        raw["train"]["batch_size"] = 14
        config_path.write_text(yaml.safe_dump(raw))
        assert main(["train", "--config", str(config_path)]) == 0
        assert not marker.exists()

    def test_train_in_tiling_mode_with_tile_dump(self, tiny_dataset, tmp_path):
        raw = smoke_raw(tiny_dataset, tmp_path / "tilerun")
        del raw["preprocess"]["target_dims"]
        raw["tiling"] = {"window_sizes": [16, 32], "zoom_levels": 2, "n_tiles": 9,
                        "canvas_dims": [96, 96], "selection_seed": 1}
        config_path = tmp_path / "c.yaml"
        config_path.write_text(yaml.safe_dump(raw))
        rc = main(["train", "--config", str(config_path), "--dump-tiles", "2"])
        assert rc == 0
        tile_dirs = list((tmp_path / "tilerun" / "tiles").iterdir())
        assert len(tile_dirs) == 2
        for d in tile_dirs:
            assert (d / "mosaic.png").is_file()
            assert len(list(d.glob("tile_*.png"))) == 9

    def test_describe_command(self, tiny_dataset, tmp_path, capsys):
        config_path = tmp_path / "c.yaml"
        config_path.write_text(yaml.safe_dump(smoke_raw(tiny_dataset, tmp_path / "r")))
        rc = main(["describe", "--config", str(config_path)])
        assert rc == 0
        assert "parameters" in capsys.readouterr().out

    def test_report_command_aggregates_runs(self, tiny_dataset, tmp_path, capsys):
        runs = []
        for k in range(2):
            raw = smoke_raw(tiny_dataset, tmp_path / f"rep{k}")
            raw["train"]["seed"] = 20 + k
            config_path = tmp_path / f"c{k}.yaml"
            config_path.write_text(yaml.safe_dump(raw))
            assert main(["train", "--config", str(config_path)]) == 0
            runs.append(str(tmp_path / f"rep{k}"))
        rc = main(["report", *runs, "--out", str(tmp_path / "table.csv")])
        assert rc == 0
        out = capsys.readouterr().out
        assert "weighted_f1" in out
        assert (tmp_path / "table.csv").is_file()

    def test_sweep_runs_sequentially(self, tiny_dataset, tmp_path, capsys):
        paths = []
        for k in range(2):
            raw = smoke_raw(tiny_dataset, tmp_path / f"sweep{k}")
            config_path = tmp_path / f"s{k}.yaml"
            config_path.write_text(yaml.safe_dump(raw))
            paths.append(str(config_path))
        rc = main(["sweep", *paths])
        assert rc == 0

    def test_run_root_env_override(self, tiny_dataset, tmp_path, monkeypatch):
        from histopipe.runner import resolve_run_dir

        monkeypatch.setenv("HISTOPIPE_RUN_ROOT", str(tmp_path / "root"))
        assert resolve_run_dir("exp1") == tmp_path / "root" / "exp1"
        assert resolve_run_dir(tmp_path / "abs") == tmp_path / "abs"

    def test_seed_override_flag(self, tiny_dataset, tmp_path):
        raw = smoke_raw(tiny_dataset, tmp_path / "seedrun")
        config_path = tmp_path / "c.yaml"
        config_path.write_text(yaml.safe_dump(raw))
        assert main(["train", "--config", str(config_path), "--seed", "99"]) == 0
        snapshot = yaml.safe_load((tmp_path / "seedrun" / "config.yaml").read_text())
        assert snapshot["train"]["seed"] == 99
