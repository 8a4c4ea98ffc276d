"""Experiment configuration: YAML schema, strict validation, named presets.

A config file fully determines an experiment (with its seeds); unknown keys
are rejected so typos cannot silently change a run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .augment import AugmentSpec
from .losses import LossSpec
from .models import ModelConfig
from .preprocess import PreprocessSpec, load_image, stain_stats
from .sampling import BatchPlan
from .tiling import TileSpec
from .train import TrainConfig


class ConfigError(ValueError):
    """Config validation failure; message carries the config path and field."""


@dataclass(frozen=True)
class DatasetSection:
    root: Path
    layout: str = "bracs_folders"
    split_mode: str = "default"  # "default" | "custom"
    split_probs: tuple[float, float, float] = (0.9, 0.07, 0.03)
    split_seed: int = 42
    upsample_target: int | None = None
    upsample_seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSection
    preprocess: PreprocessSpec
    tiling: TileSpec | None
    model: ModelConfig
    train: TrainConfig
    run_dir: Path
    raw: dict = field(compare=False, repr=False, default_factory=dict)


def _require(section: dict, key: str, where: str):
    if key not in section or section[key] is None:
        raise ConfigError(f"{where}: missing required key '{key}'")
    return section[key]


def _reject_unknown(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)} (allowed: {sorted(allowed)})")


def _pair(value, where: str) -> tuple[int, int]:
    if not (isinstance(value, (list, tuple)) and len(value) == 2):
        raise ConfigError(f"{where}: expected a [height, width] pair, got {value!r}")
    return int(value[0]), int(value[1])


def _parse_dataset(section: dict, where: str) -> DatasetSection:
    _reject_unknown(section, {"root", "layout", "split", "upsample_target", "upsample_seed"}, where)
    root = Path(_require(section, "root", where))
    layout = section.get("layout", "bracs_folders")
    split = section.get("split") or {}
    _reject_unknown(split, {"mode", "probs", "seed"}, f"{where}.split")
    mode = split.get("mode", "default")
    if mode not in ("default", "custom"):
        raise ConfigError(f"{where}.split.mode: expected default or custom, got {mode!r}")
    probs = tuple(float(p) for p in split.get("probs", (0.9, 0.07, 0.03)))
    if len(probs) != 3:
        raise ConfigError(f"{where}.split.probs: expected three fractions, got {probs}")
    return DatasetSection(
        root=root,
        layout=layout,
        split_mode=mode,
        split_probs=probs,
        split_seed=int(split.get("seed", 42)),
        upsample_target=(int(section["upsample_target"])
                         if section.get("upsample_target") is not None else None),
        upsample_seed=int(section.get("upsample_seed", 0)),
    )


def _parse_preprocess(section: dict, where: str, tiling_active: bool) -> PreprocessSpec:
    _reject_unknown(
        section,
        {"target_dims", "gray_noise", "luminance_threshold", "stain_norm", "stain_reference"},
        where,
    )
    target_dims = section.get("target_dims")
    if tiling_active and target_dims is not None:
        raise ConfigError(
            f"{where}.target_dims: tiling and plain-resize are mutually exclusive; "
            "remove target_dims or the tiling section"
        )
    if not tiling_active and target_dims is None:
        raise ConfigError(f"{where}.target_dims: required when tiling is not configured")
    reference = None
    if section.get("stain_norm", "none") == "reference_based":
        ref_path = _require(section, "stain_reference", where)
        reference = stain_stats(load_image(ref_path))
    return PreprocessSpec(
        target_dims=None if target_dims is None else _pair(target_dims, f"{where}.target_dims"),
        gray_noise=bool(section.get("gray_noise", False)),
        luminance_threshold=int(section.get("luminance_threshold", 240)),
        stain_norm=section.get("stain_norm", "none"),
        stain_reference=reference,
    )


def _parse_tiling(section: dict, where: str) -> TileSpec:
    _reject_unknown(
        section,
        {"window_sizes", "zoom_levels", "n_tiles", "canvas_dims", "selection_seed",
         "background_threshold", "max_attempts"},
        where,
    )
    defaults = TileSpec()
    return TileSpec(
        window_sizes=tuple(int(w) for w in section.get("window_sizes", defaults.window_sizes)),
        zoom_levels=int(section.get("zoom_levels", defaults.zoom_levels)),
        n_tiles=int(section.get("n_tiles", defaults.n_tiles)),
        canvas_dims=_pair(section.get("canvas_dims", defaults.canvas_dims), f"{where}.canvas_dims"),
        selection_seed=int(section.get("selection_seed", defaults.selection_seed)),
        background_threshold=int(section.get("background_threshold", defaults.background_threshold)),
        max_attempts=int(section.get("max_attempts", defaults.max_attempts)),
    )


def _parse_model(section: dict, where: str, input_dims: tuple[int, int]) -> ModelConfig:
    _reject_unknown(
        section,
        {"backbone", "head", "dropout", "num_classes", "pretrained", "pyramid_width"},
        where,
    )
    return ModelConfig(
        backbone=_require(section, "backbone", where),
        head=section.get("head", "attention"),
        dropout=float(section.get("dropout", 0.45)),
        num_classes=int(section.get("num_classes", 7)),
        input_dims=input_dims,
        pretrained=bool(section.get("pretrained", False)),
        pyramid_width=int(section.get("pyramid_width", 256)),
    )


def _parse_loss(section: dict, where: str) -> LossSpec:
    _reject_unknown(section, {"kind", "smoothing", "gamma"}, where)
    defaults = LossSpec()
    return LossSpec(
        kind=section.get("kind", defaults.kind),
        smoothing=float(section.get("smoothing", defaults.smoothing)),
        gamma=float(section.get("gamma", defaults.gamma)),
    )


def _parse_augment(section: dict, where: str) -> AugmentSpec:
    allowed = {
        "rotation90", "hflip_prob", "vflip_prob", "shift_fraction", "zoom_range",
        "brightness_delta", "blur_sharpen", "cutmix_prob", "cutmix_alpha",
        "mixup_prob", "mixup_alpha",
    }
    _reject_unknown(section, allowed, where)
    defaults = AugmentSpec.disabled()
    kwargs = {k: type(getattr(defaults, k))(v) for k, v in section.items()}
    return AugmentSpec(**{**{k: getattr(defaults, k) for k in allowed}, **kwargs})


def _parse_train(section: dict, where: str) -> TrainConfig:
    allowed = {
        "loss", "base_lr", "weight_decay", "epochs", "batch_size", "sampler",
        "augment", "seed", "eta_min", "cache_images",
    }
    _reject_unknown(section, allowed, where)
    sampler = section.get("sampler") or {}
    _reject_unknown(sampler, {"strategy", "seed"}, f"{where}.sampler")
    batch_size = int(section.get("batch_size", 28))
    return TrainConfig(
        loss=_parse_loss(section.get("loss") or {}, f"{where}.loss"),
        base_lr=float(section.get("base_lr", 1e-3)),
        weight_decay=float(section.get("weight_decay", 1e-4)),
        epochs=int(section.get("epochs", 30)),
        batch_size=batch_size,
        sampler=BatchPlan(batch_size, sampler.get("strategy", "none"),
                          int(sampler.get("seed", 0))),
        augment=_parse_augment(section.get("augment") or {}, f"{where}.augment"),
        seed=int(section.get("seed", 42)),
        eta_min=float(section.get("eta_min", 1e-6)),
        cache_images=bool(section.get("cache_images", False)),
    )


def parse_config(raw: dict, source: str = "<config>") -> ExperimentConfig:
    """Validate a raw config mapping into typed sections."""
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be a mapping, got {type(raw).__name__}")
    _reject_unknown(raw, {"dataset", "preprocess", "tiling", "model", "train", "output"}, source)
    for name in ("dataset", "model", "train", "output"):
        if name not in raw or raw[name] is None:
            raise ConfigError(f"{source}: missing required section '{name}'")
    tiling = _parse_tiling(raw["tiling"], f"{source}.tiling") if raw.get("tiling") else None
    preprocess = _parse_preprocess(raw.get("preprocess") or {}, f"{source}.preprocess",
                                   tiling_active=tiling is not None)
    input_dims = tiling.canvas_dims if tiling is not None else preprocess.target_dims
    output = raw["output"]
    _reject_unknown(output, {"run_dir"}, f"{source}.output")
    return ExperimentConfig(
        dataset=_parse_dataset(raw["dataset"], f"{source}.dataset"),
        preprocess=preprocess,
        tiling=tiling,
        model=_parse_model(raw["model"], f"{source}.model", input_dims),
        train=_parse_train(raw["train"], f"{source}.train"),
        run_dir=Path(_require(output, "run_dir", f"{source}.output")),
        raw=raw,
    )


def load_config(path: Path | str) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    with path.open(encoding="utf-8") as f:
        try:
            raw = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
    return parse_config(raw, str(path))
