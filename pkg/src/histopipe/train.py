"""Training engine: AdamW + cosine schedule loop over manifest batches.

A single coordinator owns model, optimizer, and checkpoints. Runs are
deterministic for a fixed seed (CPU determinism switches are enabled; any
backend nondeterminism is limited to what the runtime cannot switch off).
"""

from __future__ import annotations

import json
import os
import random
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .augment import AugmentSpec, apply_spatial, batch_augment, one_hot
from .data import SamplePipeline, to_model_batch
from .evaluate import ConfusionMatrix, compute_metrics, confusion
from .labels import CLASS_ORDER
from .losses import LossSpec, cosine_lr, make_loss
from .manifest import DatasetManifest, SampleRecord
from .models import HistologyClassifier, ModelConfig, build_model
from .preprocess import PreprocessSpec
from .sampling import BatchPlan, batch_stream, epoch_length


class TrainingError(RuntimeError):
    """Fatal training failure (divergence, bad configuration, IO)."""


@dataclass(frozen=True)
class TrainConfig:
    loss: LossSpec = LossSpec()
    base_lr: float = 1e-3
    weight_decay: float = 1e-4
    epochs: int = 30
    batch_size: int = 28
    sampler: BatchPlan = BatchPlan(batch_size=28, strategy="none")
    augment: AugmentSpec = AugmentSpec.disabled()
    seed: int = 42
    eta_min: float = 1e-6
    cache_images: bool = False

    def __post_init__(self) -> None:
        if self.base_lr <= 0:
            raise TrainingError(f"base_lr must be positive, got {self.base_lr}")
        if not 1e-5 <= self.weight_decay <= 1e-2:
            raise TrainingError(
                f"weight_decay must lie in [1e-5, 1e-2], got {self.weight_decay}"
            )
        if self.epochs < 0:
            raise TrainingError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise TrainingError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class RunResult:
    run_dir: Path
    best_checkpoint: Path
    last_checkpoint: Path
    history: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_val_weighted_f1: float = 0.0
    test_metrics: dict | None = None


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)


def save_checkpoint(path: Path, model: torch.nn.Module, model_config: ModelConfig,
                    metadata: dict) -> None:
    """Write weights + config + metadata atomically (temp file then rename)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        torch.save(
            {"model_state": model.state_dict(), "model_config": asdict(model_config),
             "metadata": metadata},
            tmp,
        )
        os.replace(tmp, path)
    except OSError as exc:
        raise TrainingError(f"checkpoint write failed at {path}: {exc}") from exc


def load_checkpoint(path: Path | str) -> tuple[HistologyClassifier, dict]:
    payload = torch.load(Path(path), map_location="cpu", weights_only=False)
    config_dict = dict(payload["model_config"])
    config_dict["input_dims"] = tuple(config_dict["input_dims"])
    config = ModelConfig(**config_dict)
    model = build_model(config)
    model.load_state_dict(payload["model_state"])
    model.eval()
    return model, payload.get("metadata", {})


def _label_index(record: SampleRecord, num_classes: int) -> int:
    idx = record.label.index
    if idx >= num_classes:
        raise TrainingError(
            f"record {record.id} has label {record.label.value} (index {idx}) "
            f"but the model has {num_classes} classes"
        )
    return idx


def _assemble_batch(
    records: list[SampleRecord],
    pipeline: SamplePipeline,
    num_classes: int,
    augment_spec: AugmentSpec | None,
    rng: np.random.Generator | None,
) -> tuple[torch.Tensor, torch.Tensor]:
    images = []
    labels = []
    for record in records:
        image = pipeline(record)
        if augment_spec is not None:
            image = apply_spatial(image, augment_spec, rng)
        images.append(image)
        labels.append(one_hot(_label_index(record, num_classes), num_classes))
    image_arr = np.stack(images).astype(np.float32)
    label_arr = np.stack(labels)
    if augment_spec is not None:
        image_arr, label_arr = batch_augment(image_arr, label_arr, augment_spec, rng)
    x = torch.from_numpy(to_model_batch(image_arr))
    y = torch.from_numpy(label_arr.astype(np.float32))
    return x, y


@torch.no_grad()
def predict(
    model: torch.nn.Module,
    records: list[SampleRecord] | tuple[SampleRecord, ...],
    pipeline: SamplePipeline,
    num_classes: int,
    batch_size: int = 32,
) -> tuple[list[int], list[int]]:
    """Deterministic (no augmentation, eval mode) predictions over records."""
    model.eval()
    true_idx: list[int] = []
    pred_idx: list[int] = []
    for start in range(0, len(records), batch_size):
        chunk = list(records[start : start + batch_size])
        x, _ = _assemble_batch(chunk, pipeline, num_classes, None, None)
        logits = model(x)
        pred_idx.extend(int(i) for i in logits.argmax(dim=1))
        true_idx.extend(_label_index(r, num_classes) for r in chunk)
    return true_idx, pred_idx


def evaluate_split(
    model: torch.nn.Module,
    manifest: DatasetManifest,
    split: str,
    pipeline: SamplePipeline,
    num_classes: int,
    batch_size: int = 32,
) -> tuple[ConfusionMatrix, dict]:
    records = manifest.split_records(split)
    if not records:
        raise TrainingError(f"manifest has no {split} samples to evaluate")
    true_idx, pred_idx = predict(model, records, pipeline, num_classes, batch_size)
    names = tuple(c.value for c in CLASS_ORDER[:num_classes])
    cm = confusion(true_idx, pred_idx, names)
    return cm, compute_metrics(cm).as_dict()


def train(
    model_config: ModelConfig,
    train_config: TrainConfig,
    manifest: DatasetManifest,
    run_dir: Path | str,
    pipeline: SamplePipeline | None = None,
) -> RunResult:
    """Run the full loop: sample, augment, step, validate, checkpoint best.

    Keeps the checkpoint with the best validation weighted F1; the per-epoch
    history goes to ``metrics.jsonl`` (one JSON object per line).
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    if pipeline is None:
        pipeline = SamplePipeline(
            PreprocessSpec(target_dims=model_config.input_dims),
            cache=train_config.cache_images,
        )
    train_records = manifest.split_records("train")
    if not train_records:
        raise TrainingError("manifest has no train samples")
    if not manifest.split_records("val"):
        raise TrainingError("manifest has no val samples")

    seed_everything(train_config.seed)
    model = build_model(model_config)
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=train_config.base_lr, weight_decay=train_config.weight_decay
    )
    loss_fn = make_loss(train_config.loss)
    plan = BatchPlan(train_config.batch_size, train_config.sampler.strategy,
                     train_config.sampler.seed)
    steps_per_epoch = epoch_length(len(train_records), train_config.batch_size)
    total_steps = max(1, train_config.epochs * steps_per_epoch)

    result = RunResult(
        run_dir=run_dir,
        best_checkpoint=run_dir / "best.pt",
        last_checkpoint=run_dir / "last.pt",
    )
    metrics_log = run_dir / "metrics.jsonl"
    metrics_log.write_text("", encoding="utf-8")
    save_checkpoint(result.best_checkpoint, model, model_config, {"epoch": -1})
    save_checkpoint(result.last_checkpoint, model, model_config, {"epoch": -1})

    batches = batch_stream(manifest, plan)
    global_step = 0
    for epoch in range(train_config.epochs):
        model.train()
        aug_rng = np.random.default_rng([train_config.seed % 2**32, 1 + epoch])
        epoch_losses = []
        lr = train_config.base_lr
        started = time.perf_counter()
        for _ in range(steps_per_epoch):
            batch_records = [manifest.records[i] for i in next(batches)]
            x, y = _assemble_batch(batch_records, pipeline, model_config.num_classes,
                                   train_config.augment, aug_rng)
            lr = cosine_lr(global_step, total_steps, train_config.base_lr, train_config.eta_min)
            for group in optimizer.param_groups:
                group["lr"] = lr
            optimizer.zero_grad()
            loss = loss_fn(model(x), y)
            value = float(loss.item())
            if not np.isfinite(value):
                raise TrainingError(
                    f"loss diverged at epoch {epoch} step {global_step}: {value} "
                    f"(lr={lr:.2e}, batch of {len(batch_records)})"
                )
            loss.backward()
            optimizer.step()
            global_step += 1
            epoch_losses.append(value)
        _, val_metrics = evaluate_split(model, manifest, "val", pipeline,
                                        model_config.num_classes, train_config.batch_size)
        entry = {
            "epoch": epoch,
            "train_loss": float(np.mean(epoch_losses)),
            "lr": lr,
            "val_accuracy": val_metrics["accuracy"],
            "val_weighted_f1": val_metrics["weighted_f1"],
            "val_sensitivity": val_metrics["sensitivity"],
            "seconds": time.perf_counter() - started,
        }
        result.history.append(entry)
        with metrics_log.open("a", encoding="utf-8") as f:
            f.write(json.dumps(entry) + "\n")
        if result.best_epoch < 0 or val_metrics["weighted_f1"] > result.best_val_weighted_f1:
            result.best_val_weighted_f1 = val_metrics["weighted_f1"]
            result.best_epoch = epoch
            save_checkpoint(result.best_checkpoint, model, model_config,
                            {"epoch": epoch, "val_weighted_f1": result.best_val_weighted_f1})
        save_checkpoint(result.last_checkpoint, model, model_config, {"epoch": epoch})
    return result
