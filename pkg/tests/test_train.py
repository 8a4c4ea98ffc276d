from __future__ import annotations

import json

import numpy as np
import pytest
import torch

from histopipe.augment import AugmentSpec
from histopipe.data import SamplePipeline, to_model_batch
from histopipe.losses import LossSpec
from histopipe.manifest import custom_split, load_manifest
from histopipe.models import ModelConfig
from histopipe.preprocess import PreprocessSpec
from histopipe.sampling import BatchPlan
from histopipe.train import (
    TrainConfig,
    TrainingError,
    load_checkpoint,
    save_checkpoint,
    seed_everything,
    train,
)

from conftest import solid_image, write_png


@pytest.fixture(scope="module")
def separable_dataset(tmp_path_factory):
    """3-class solid-colour dataset, ~200 images, linearly separable."""
    root = tmp_path_factory.mktemp("separable") / "data"
    rng = np.random.default_rng(0)
    colors = {"N": (220, 40, 40), "PB": (40, 220, 40), "UDH": (40, 40, 220)}
    for label, color in colors.items():
        for k in range(67):
            jitter = rng.integers(-10, 11, size=3)
            arr = solid_image(tuple(int(np.clip(c + j, 0, 255)) for c, j in zip(color, jitter)),
                              dims=(64, 64))
            write_png(root / label / f"{k:03d}.png", arr)
    return root


def tiny_configs(epochs=5, seed=42, strategy="batch_balanced", batch_size=21):
    model_config = ModelConfig(backbone="tiny", head="attention", dropout=0.1,
                               num_classes=7, input_dims=(64, 64))
    train_config = TrainConfig(
        loss=LossSpec(kind="cross_entropy"),
        base_lr=1e-3,
        epochs=epochs,
        batch_size=batch_size,
        sampler=BatchPlan(batch_size, strategy, seed=0),
        augment=AugmentSpec.disabled(),
        seed=seed,
        cache_images=True,
    )
    return model_config, train_config


class TestTrainLoop:
    def test_separable_sanity_reaches_high_val_accuracy(self, separable_dataset, tmp_path):
        manifest = custom_split(load_manifest(separable_dataset), (0.7, 0.15, 0.15), seed=5)
        model_config, train_config = tiny_configs()
        result = train(model_config, train_config, manifest, tmp_path / "run")
        assert max(h["val_accuracy"] for h in result.history) >= 0.99

    def test_zero_epochs_yields_initial_checkpoint_and_empty_history(
        self, separable_dataset, tmp_path
    ):
        manifest = custom_split(load_manifest(separable_dataset), (0.8, 0.2, 0.0), seed=1)
        model_config, train_config = tiny_configs(epochs=0)
        result = train(model_config, train_config, manifest, tmp_path / "run0")
        assert result.history == []
        assert result.best_checkpoint.is_file() and result.last_checkpoint.is_file()
        model, metadata = load_checkpoint(result.best_checkpoint)
        assert metadata["epoch"] == -1

    def test_determinism_across_runs(self, separable_dataset, tmp_path):
        manifest = custom_split(load_manifest(separable_dataset), (0.8, 0.2, 0.0), seed=2)
        losses = []
        for run in range(2):
            model_config, train_config = tiny_configs(epochs=1)
            result = train(model_config, train_config, manifest, tmp_path / f"run{run}")
            losses.append(result.history[0]["train_loss"])
        assert round(losses[0], 6) == round(losses[1], 6)

    def test_best_checkpoint_equals_history_max(self, separable_dataset, tmp_path):
        manifest = custom_split(load_manifest(separable_dataset), (0.7, 0.3, 0.0), seed=3)
        model_config, train_config = tiny_configs(epochs=3)
        result = train(model_config, train_config, manifest, tmp_path / "runb")
        best_in_history = max(h["val_weighted_f1"] for h in result.history)
        assert result.best_val_weighted_f1 == pytest.approx(best_in_history)
        _, metadata = load_checkpoint(result.best_checkpoint)
        assert metadata["val_weighted_f1"] == pytest.approx(best_in_history)

    def test_metrics_log_one_json_per_epoch(self, separable_dataset, tmp_path):
        manifest = custom_split(load_manifest(separable_dataset), (0.8, 0.2, 0.0), seed=4)
        model_config, train_config = tiny_configs(epochs=2)
        result = train(model_config, train_config, manifest, tmp_path / "runlog")
        lines = (result.run_dir / "metrics.jsonl").read_text().strip().splitlines()
        assert len(lines) == 2
        entry = json.loads(lines[0])
        assert {"epoch", "train_loss", "lr", "val_accuracy", "val_weighted_f1"} <= set(entry)

    def test_missing_val_split_fatal(self, separable_dataset, tmp_path):
        manifest = load_manifest(separable_dataset)  # flat tree: everything in train
        model_config, train_config = tiny_configs(epochs=1)
        with pytest.raises(TrainingError, match="no val samples"):
            train(model_config, train_config, manifest, tmp_path / "runx")

    def test_disabled_augmentation_stream_matches_plain_batches(self, separable_dataset):
        from histopipe.train import _assemble_batch

        manifest = load_manifest(separable_dataset)
        pipeline = SamplePipeline(PreprocessSpec(target_dims=(64, 64)))
        records = list(manifest.records[:8])
        plain_x, plain_y = _assemble_batch(records, pipeline, 7, None, None)
        aug_x, aug_y = _assemble_batch(records, pipeline, 7, AugmentSpec.disabled(),
                                       np.random.default_rng(0))
        assert torch.equal(plain_x, aug_x)
        assert torch.equal(plain_y, aug_y)


class TestCheckpointIO:
    def test_round_trip_preserves_weights(self, tmp_path):
        seed_everything(0)
        config = ModelConfig(backbone="tiny", input_dims=(32, 32))
        from histopipe.models import build_model

        model = build_model(config)
        path = tmp_path / "ck.pt"
        save_checkpoint(path, model, config, {"epoch": 7})
        loaded, metadata = load_checkpoint(path)
        assert metadata["epoch"] == 7
        for a, b in zip(model.state_dict().values(), loaded.state_dict().values()):
            assert torch.equal(a, b)

    def test_no_stale_temp_file_left(self, tmp_path):
        seed_everything(0)
        config = ModelConfig(backbone="tiny", input_dims=(32, 32))
        from histopipe.models import build_model

        save_checkpoint(tmp_path / "ck.pt", build_model(config), config, {})
        assert not list(tmp_path.glob("*.tmp"))


class TestModelBatch:
    def test_normalization_round_numbers(self):
        images = np.zeros((1, 4, 4, 3), dtype=np.float32)
        x = to_model_batch(images)
        assert x.shape == (1, 3, 4, 4)
        # zero pixels map to -mean/std per channel
        assert x[0, 0, 0, 0] == pytest.approx(-0.485 / 0.229, rel=1e-5)
