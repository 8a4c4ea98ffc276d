"""Bridges manifest records to model-ready arrays.

The pipeline is the deterministic half of data handling (load, resize or tile
mosaic, graying, stain transfer); stochastic train-time augmentation stays in
the training loop so val/test batches share this exact code path.
"""

from __future__ import annotations

import zlib
from dataclasses import replace
from pathlib import Path

import numpy as np

from .augment import AugmentSpec, apply_spatial
from .manifest import DatasetManifest, SampleRecord
from .preprocess import PreprocessSpec, apply_preprocess, load_image
from .tiling import TileSpec, tile_mosaic

IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


class SamplePipeline:
    """record -> preprocessed uint8 RGB array at the model input dims.

    In tiling mode the mosaic replaces the plain resize: gray/stain run on the
    source image, tiles are extracted per record (seed derived stably from the
    record id), and the merged canvas is the model input.
    """

    def __init__(
        self,
        preprocess_spec: PreprocessSpec,
        tile_spec: TileSpec | None = None,
        cache: bool = False,
    ):
        self.preprocess_spec = preprocess_spec
        self.tile_spec = tile_spec
        self._cache: dict[str, np.ndarray] | None = {} if cache else None

    @property
    def output_dims(self) -> tuple[int, int] | None:
        if self.tile_spec is not None:
            return self.tile_spec.canvas_dims
        return self.preprocess_spec.target_dims

    def __call__(self, record: SampleRecord) -> np.ndarray:
        key = str(record.image_path)
        if self._cache is not None and key in self._cache:
            return self._cache[key]
        image = load_image(record.image_path)
        if self.tile_spec is None:
            out = apply_preprocess(image, self.preprocess_spec)
        else:
            # resize is the mosaic's job; other preprocessing applies to the source
            source_spec = replace(self.preprocess_spec, target_dims=None)
            image = apply_preprocess(image, source_spec)
            seed = (self.tile_spec.selection_seed + zlib.crc32(record.id.encode())) % 2**32
            out = tile_mosaic(image, replace(self.tile_spec, selection_seed=seed), record.id)
        if self._cache is not None:
            self._cache[key] = out
        return out


def to_model_batch(images: np.ndarray) -> np.ndarray:
    """(B, H, W, 3) pixel array in [0, 255] -> normalized float32 (B, 3, H, W)."""
    x = images.astype(np.float32) / 255.0
    x = (x - IMAGENET_MEAN) / IMAGENET_STD
    return np.ascontiguousarray(x.transpose(0, 3, 1, 2))


def dump_augmented(
    manifest: DatasetManifest,
    pipeline: SamplePipeline,
    spec: AugmentSpec,
    n: int,
    out_dir: Path | str,
    seed: int = 0,
) -> list[Path]:
    """Write n augmented train samples as PNGs for visual audit."""
    from PIL import Image

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    train = manifest.split_records("train")
    paths = []
    for k in range(n):
        record = train[int(rng.integers(0, len(train)))]
        image = apply_spatial(pipeline(record), spec, rng)
        path = out_dir / f"augmented_{k:03d}_{record.label.value}.png"
        Image.fromarray(image).save(path)
        paths.append(path)
    return paths
