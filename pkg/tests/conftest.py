from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from histopipe.labels import CLASS_ORDER
from histopipe.manifest import SampleRecord, build_manifest

# class counts of the real ROI collection, used as the canonical imbalance fixture
TABLE1_COUNTS = {"N": 484, "DCIS": 790, "FEA": 756, "PB": 836, "IC": 649, "UDH": 517, "ADH": 507}


def make_manifest(counts: dict[str, int], split: str = "train"):
    """In-memory manifest with the given per-class counts (paths are not touched)."""
    records = []
    for label in CLASS_ORDER:
        for k in range(counts.get(label.value, 0)):
            records.append(
                SampleRecord(
                    id=f"{label.value}_{k:04d}",
                    image_path=Path(f"/fixtures/{label.value}/{k:04d}.png"),
                    label=label,
                    split=split,
                )
            )
    return build_manifest(records)


@pytest.fixture
def table1_manifest():
    return make_manifest(TABLE1_COUNTS)


def write_png(path: Path, array: np.ndarray) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(array).save(path)
    return path


def solid_image(color, dims=(16, 16)) -> np.ndarray:
    return np.full((*dims, 3), color, dtype=np.uint8)


@pytest.fixture
def small_bracs_tree(tmp_path):
    """Minimal train/val/test folder tree with 2/1/1 images per class."""
    rng = np.random.default_rng(0)
    root = tmp_path / "bracs"
    for split, per_class in (("train", 2), ("val", 1), ("test", 1)):
        for ci, label in enumerate(CLASS_ORDER):
            for k in range(per_class):
                arr = rng.integers(0, 255, size=(12, 12, 3), dtype=np.uint8)
                write_png(root / split / label.value / f"img_{k}.png", arr)
    return root


@pytest.fixture(scope="session")
def synth_dataset(tmp_path_factory):
    """Session-wide synthetic dataset: 7 classes x 50 images at 128x128."""
    from histopipe.synthetic import generate_synthetic

    root = tmp_path_factory.mktemp("synth") / "data"
    generate_synthetic(root, classes=7, per_class=50, image_dims=(128, 128), seed=11)
    return root
