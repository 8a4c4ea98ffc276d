"""Experiment orchestration: manifest -> split -> upsample -> train -> evaluate.

Every run leaves a self-describing directory: config snapshot, manifest CSV,
per-epoch metrics log, best/last checkpoints, and a final report (or a FAILED
marker when a fatal error interrupted the run).
"""

from __future__ import annotations

import json
import os
import traceback
from pathlib import Path

from .config import ExperimentConfig
from .data import SamplePipeline, dump_augmented
from .evaluate import confusion_heatmap, confusion_to_csv, error_rates
from .manifest import (
    DatasetManifest,
    custom_split,
    load_manifest,
    upsample,
    write_manifest_csv,
)
from .train import RunResult, evaluate_split, load_checkpoint, train

RUN_ROOT_ENV = "HISTOPIPE_RUN_ROOT"

REPORT_FILE = "report.json"
FAILURE_MARKER = "FAILED"


class RunnerError(RuntimeError):
    pass


def resolve_run_dir(run_dir: Path | str) -> Path:
    """Relative run dirs land under $HISTOPIPE_RUN_ROOT when it is set."""
    run_dir = Path(run_dir)
    root = os.environ.get(RUN_ROOT_ENV)
    if root and not run_dir.is_absolute():
        return Path(root) / run_dir
    return run_dir


def prepare_manifest(config: ExperimentConfig) -> DatasetManifest:
    """Dataset section of the pipeline: load, optional custom split, upsample."""
    manifest = load_manifest(config.dataset.root, config.dataset.layout)
    if config.dataset.split_mode == "custom":
        manifest = custom_split(manifest, config.dataset.split_probs, config.dataset.split_seed)
    if config.dataset.upsample_target is not None:
        manifest = upsample(manifest, config.dataset.upsample_target, config.dataset.upsample_seed)
    return manifest


def build_pipeline(config: ExperimentConfig) -> SamplePipeline:
    return SamplePipeline(config.preprocess, config.tiling, cache=config.train.cache_images)


def _loss_label(kind: str) -> str:
    return {"cross_entropy": "CrossEntropy", "label_smoothing_ce": "LabelSmoothing",
            "focal": "Focal Loss"}[kind]


def _augmentation_label(config: ExperimentConfig) -> str:
    if config.train.augment.cutmix_prob > 0 or config.train.augment.mixup_prob > 0:
        return "CUTMIX and MIXUP"
    if config.preprocess.stain_norm != "none":
        return "Stain Normalization"
    return "NO"


def run_row(config: ExperimentConfig, metrics: dict) -> dict:
    """One comparison-table row in the reported-results column layout."""
    dims = config.model.input_dims
    return {
        "model": config.model.backbone + (" Pyramid" if config.model.head == "pyramid" else "")
        + (" with Tiling" if config.tiling is not None else ""),
        "image_size": f"({dims[0]},{dims[1]})",
        "augmentation": _augmentation_label(config),
        "dropout": config.model.dropout,
        "loss": _loss_label(config.train.loss.kind),
        "accuracy": metrics["accuracy"],
        "weighted_f1": metrics["weighted_f1"],
        "sensitivity": metrics["sensitivity"],
    }


def _snapshot_config(config: ExperimentConfig, run_dir: Path) -> None:
    import yaml

    raw = dict(config.raw)
    raw.setdefault("dataset", {})
    raw["dataset"] = {**raw["dataset"], "root": str(config.dataset.root)}
    raw["output"] = {"run_dir": str(run_dir)}
    (run_dir / "config.yaml").write_text(yaml.safe_dump(raw, sort_keys=False), encoding="utf-8")


def is_completed(run_dir: Path) -> bool:
    return (run_dir / REPORT_FILE).is_file()


def load_report(run_dir: Path) -> dict:
    with (run_dir / REPORT_FILE).open(encoding="utf-8") as f:
        return json.load(f)


def run_experiment(
    config: ExperimentConfig,
    resume: bool = False,
    force: bool = False,
    dump_augmented_n: int = 0,
    dump_tiles_n: int = 0,
) -> dict:
    """Execute the full experiment; returns the final report mapping."""
    run_dir = resolve_run_dir(config.run_dir)
    if is_completed(run_dir):
        if resume:
            return load_report(run_dir)
        if not force:
            raise RunnerError(
                f"run already completed at {run_dir}; pass resume=True to reuse it "
                "or force=True to retrain"
            )
    run_dir.mkdir(parents=True, exist_ok=True)
    marker = run_dir / FAILURE_MARKER
    try:
        report = _execute(config, run_dir, dump_augmented_n, dump_tiles_n)
    except Exception:
        marker.write_text(traceback.format_exc(), encoding="utf-8")
        raise
    if marker.exists():
        marker.unlink()
    return report


def _dump_tiles(config: ExperimentConfig, manifest: DatasetManifest, run_dir: Path,
                n: int) -> None:
    from dataclasses import replace

    from .preprocess import apply_preprocess, load_image
    from .tiling import dump_tiles

    source_spec = replace(config.preprocess, target_dims=None)
    for record in manifest.split_records("train")[:n]:
        image = apply_preprocess(load_image(record.image_path), source_spec)
        dump_tiles(image, config.tiling, run_dir / "tiles",
                   record.id.replace("/", "_"))


def _execute(config: ExperimentConfig, run_dir: Path, dump_augmented_n: int,
             dump_tiles_n: int = 0) -> dict:
    _snapshot_config(config, run_dir)
    manifest = prepare_manifest(config)
    write_manifest_csv(manifest, run_dir / "manifest.csv")
    validation = manifest.report.render()
    if validation:
        (run_dir / "validation_report.txt").write_text(validation + "\n", encoding="utf-8")
    pipeline = build_pipeline(config)
    if dump_augmented_n > 0:
        dump_augmented(manifest, pipeline, config.train.augment, dump_augmented_n,
                       run_dir / "augmented_samples", config.train.seed)
    if dump_tiles_n > 0 and config.tiling is not None:
        _dump_tiles(config, manifest, run_dir, dump_tiles_n)
    result: RunResult = train(config.model, config.train, manifest, run_dir, pipeline)

    best_model, _ = load_checkpoint(result.best_checkpoint)
    eval_split = "test" if manifest.split_records("test") else "val"
    cm, metrics = evaluate_split(best_model, manifest, eval_split, pipeline,
                                 config.model.num_classes, config.train.batch_size)
    confusion_to_csv(cm, run_dir / "confusion_matrix.csv")
    confusion_heatmap(cm, run_dir / "confusion_matrix.png",
                      title=f"{config.model.backbone} ({eval_split})")
    report = {
        "run_dir": str(run_dir),
        "sampler_strategy": config.train.sampler.strategy,
        "split_evaluated": eval_split,
        "row": run_row(config, metrics),
        "metrics": metrics,
        "error_rates": error_rates(cm),
        "history": result.history,
        "best_epoch": result.best_epoch,
        "best_val_weighted_f1": result.best_val_weighted_f1,
    }
    payload = json.dumps(report, indent=2)
    tmp = run_dir / (REPORT_FILE + ".tmp")
    tmp.write_text(payload, encoding="utf-8")
    os.replace(tmp, run_dir / REPORT_FILE)
    return report
