"""Synthetic desk-scale dataset generator.

Writes a BRACS-style folder tree of small images whose class is determined by
base colour and stripe texture (linearly separable by construction), so the
whole pipeline can be exercised end to end without the real 52 GB dataset.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .labels import CLASS_ORDER

# distinct mean colours, one per class in canonical order
PALETTE = (
    (200, 60, 60),
    (60, 170, 60),
    (70, 80, 200),
    (210, 190, 60),
    (180, 70, 200),
    (60, 190, 190),
    (230, 140, 50),
)


class SyntheticError(ValueError):
    """Fatal synthetic generation error."""


def synth_image(
    class_index: int, image_dims: tuple[int, int], rng: np.random.Generator
) -> np.ndarray:
    h, w = image_dims
    base = np.array(PALETTE[class_index], dtype=np.float64)
    canvas = np.tile(base, (h, w, 1))
    # class-determined stripe texture; orientation alternates with class parity
    period = 6 + 2 * class_index
    if class_index % 2 == 0:
        stripes = 18.0 * np.sin(2 * np.pi * np.arange(w) / period)[None, :, None]
    else:
        stripes = 18.0 * np.sin(2 * np.pi * np.arange(h) / period)[:, None, None]
    canvas += stripes
    canvas += rng.normal(0.0, 8.0, size=(h, w, 3))
    return np.clip(np.rint(canvas), 0, 255).astype(np.uint8)


def generate_synthetic(
    out_dir: Path | str,
    classes: int = 7,
    per_class: int = 20,
    image_dims: tuple[int, int] = (128, 128),
    seed: int = 0,
) -> Path:
    """Write ``classes`` x ``per_class`` PNGs under per-class folders.

    Deterministic: the same seed produces bitwise-identical images.
    """
    if not 1 <= classes <= len(CLASS_ORDER):
        raise SyntheticError(f"classes must be in [1, {len(CLASS_ORDER)}], got {classes}")
    if per_class < 1:
        raise SyntheticError(f"per_class must be >= 1, got {per_class}")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_probe"
        probe.touch()
        probe.unlink()
    except OSError as exc:
        raise SyntheticError(f"output directory not writable: {out_dir} ({exc})") from exc
    rng = np.random.default_rng(seed)
    for ci in range(classes):
        label = CLASS_ORDER[ci]
        class_dir = out_dir / label.value
        class_dir.mkdir(exist_ok=True)
        for k in range(per_class):
            image = synth_image(ci, image_dims, rng)
            Image.fromarray(image).save(class_dir / f"{label.value.lower()}_{k:04d}.png")
    return out_dir
