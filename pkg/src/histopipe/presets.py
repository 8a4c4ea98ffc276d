"""Named experiment presets mirroring the reported result-table rows.

Each preset is a complete config mapping except ``dataset.root`` and
``output.run_dir``, which the CLI fills in. Regenerating a results table is a
sweep over the matching preset names.
"""

from __future__ import annotations

import copy


def _base(model: dict, train: dict, dataset: dict | None = None,
          preprocess: dict | None = None, tiling: dict | None = None) -> dict:
    cfg: dict = {
        "dataset": {"root": None, "layout": "bracs_folders", **(dataset or {})},
        "preprocess": preprocess if preprocess is not None else {"target_dims": [512, 512]},
        "model": model,
        "train": train,
        "output": {"run_dir": None},
    }
    if tiling is not None:
        cfg["tiling"] = tiling
        cfg["preprocess"] = {k: v for k, v in cfg["preprocess"].items() if k != "target_dims"}
    return cfg


_TRAIN_DEFAULTS = {
    "base_lr": 1e-3,
    "weight_decay": 1e-4,
    "epochs": 30,
    "batch_size": 28,
    "sampler": {"strategy": "batch_balanced", "seed": 0},
    "augment": {"rotation90": True, "hflip_prob": 0.5, "vflip_prob": 0.5,
                "shift_fraction": 0.1, "zoom_range": 0.1},
    "seed": 42,
}

_CUTMIX_MIXUP = {"cutmix_prob": 0.5, "cutmix_alpha": 1.0, "mixup_prob": 0.5, "mixup_alpha": 1.0}

_CUSTOM_SPLIT = {"split": {"mode": "custom", "probs": [0.9, 0.07, 0.03], "seed": 42}}


def _train(loss: dict, **overrides) -> dict:
    out = copy.deepcopy(_TRAIN_DEFAULTS)
    out["loss"] = loss
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key].update(value)
        else:
            out[key] = value
    return out


PRESETS: dict[str, dict] = {
    # low-resolution table rows, original BRACS split
    "table7_efficientnet_focal_1024x512": _base(
        {"backbone": "efficientnet", "head": "attention", "dropout": 0.35, "pretrained": True},
        _train({"kind": "focal", "gamma": 2.0}),
        preprocess={"target_dims": [1024, 512]},
    ),
    "table7_efficientnet_focal_512": _base(
        {"backbone": "efficientnet", "head": "attention", "dropout": 0.45, "pretrained": True},
        _train({"kind": "focal", "gamma": 2.0}),
    ),
    "table7_efficientnet_focal_512_d50": _base(
        {"backbone": "efficientnet", "head": "attention", "dropout": 0.5, "pretrained": True},
        _train({"kind": "focal", "gamma": 2.0}),
    ),
    "table7_resnet50_ce_512": _base(
        {"backbone": "resnet50", "head": "attention", "dropout": 0.45, "pretrained": True},
        _train({"kind": "cross_entropy"}),
    ),
    "table7_resnet50_focal_512": _base(
        {"backbone": "resnet50", "head": "attention", "dropout": 0.45, "pretrained": True},
        _train({"kind": "focal", "gamma": 2.0}),
    ),
    "table7_resnet50_cutmix_mixup_512": _base(
        {"backbone": "resnet50", "head": "attention", "dropout": 0.45, "pretrained": True},
        _train({"kind": "label_smoothing_ce", "smoothing": 0.35}, augment=_CUTMIX_MIXUP),
    ),
    "table7_resnet50_stain_ce_512": _base(
        {"backbone": "resnet50", "head": "attention", "dropout": 0.45, "pretrained": True},
        _train({"kind": "cross_entropy"}),
        preprocess={"target_dims": [512, 512], "stain_norm": "reference_based",
                    "stain_reference": None},
    ),
    "table7_resnet50_pyramid_cutmix_mixup_512": _base(
        {"backbone": "resnet50", "head": "pyramid", "dropout": 0.45, "pretrained": True},
        _train({"kind": "label_smoothing_ce", "smoothing": 0.35}, augment=_CUTMIX_MIXUP),
    ),
    "table7_resnet50_tiling_1024": _base(
        {"backbone": "resnet50", "head": "attention", "dropout": 0.45, "pretrained": True},
        _train({"kind": "focal", "gamma": 2.0}, batch_size=14,
               sampler={"strategy": "batch_balanced"}),
        tiling={"window_sizes": [128, 256, 512], "zoom_levels": 3, "n_tiles": 50,
                "canvas_dims": [1024, 1024]},
    ),
    "table7_inception_resnet_focal_512": _base(
        {"backbone": "inception_resnet", "head": "attention", "dropout": 0.45},
        _train({"kind": "focal", "gamma": 2.0}),
    ),
    # high-resolution table rows
    "table4_convnexttiny_v2_focal_512": _base(
        {"backbone": "convnexttiny_v2", "head": "attention", "dropout": 0.45},
        _train({"kind": "focal", "gamma": 2.0}),
    ),
    # custom split + upsampling rows
    "table5_efficientnet_upsample1000": _base(
        {"backbone": "efficientnet", "head": "attention", "dropout": 0.45, "pretrained": True},
        _train({"kind": "focal", "gamma": 2.0}),
        dataset={**_CUSTOM_SPLIT, "upsample_target": 1000},
    ),
    "table6_resnet50_upsample2000": _base(
        {"backbone": "resnet50", "head": "attention", "dropout": 0.45, "pretrained": True},
        _train({"kind": "focal", "gamma": 2.0}),
        dataset={**_CUSTOM_SPLIT, "upsample_target": 2000},
    ),
    # desk-scale verification
    "synthetic_smoke": _base(
        {"backbone": "efficientnet", "head": "attention", "dropout": 0.45,
         "pretrained": False},
        _train({"kind": "focal", "gamma": 2.0}, epochs=5, batch_size=14,
               sampler={"strategy": "batch_balanced", "seed": 0},
               augment={}, cache_images=True),
        dataset={"split": {"mode": "custom", "probs": [0.8, 0.1, 0.1], "seed": 7}},
        preprocess={"target_dims": [128, 128]},
    ),
}


def preset_names() -> list[str]:
    return sorted(PRESETS)


def get_preset(name: str) -> dict:
    """Deep copy of the named preset config (root/run_dir still unset)."""
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return copy.deepcopy(PRESETS[name])
