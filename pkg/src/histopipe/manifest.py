"""Dataset manifest: discovery, split assignment, and per-class upsampling.

A manifest is an immutable snapshot of the sample collection. All operations
return a new manifest; class counts are always recomputed from the records so
they can never go stale.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np
from PIL import Image

from .labels import ClassLabel, CLASS_ORDER, parse_label

SPLITS = ("train", "val", "test")

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp"}

MANIFEST_COLUMNS = ["id", "path", "label", "split"]


class ManifestError(ValueError):
    """Fatal manifest configuration or content error."""


@dataclass(frozen=True)
class SampleRecord:
    """One ROI image with its label, split, and provenance."""

    id: str
    image_path: Path
    label: ClassLabel
    split: str
    origin: str = "original"  # "original" | "upsample_copy"
    source_id: str | None = None

    def __post_init__(self) -> None:
        if self.split not in SPLITS:
            raise ManifestError(f"invalid split {self.split!r} for record {self.id}")
        if self.origin == "upsample_copy" and not self.source_id:
            raise ManifestError(f"upsample copy {self.id} lacks a source_id")


@dataclass(frozen=True)
class ValidationReport:
    """Per-file exclusions collected during manifest loading."""

    excluded: tuple[tuple[str, str], ...] = ()
    warnings: tuple[str, ...] = ()

    def render(self) -> str:
        lines = [f"{path}: {reason}" for path, reason in self.excluded]
        lines.extend(self.warnings)
        return "\n".join(lines)


@dataclass(frozen=True)
class DatasetManifest:
    records: tuple[SampleRecord, ...]
    split_mode: str = "bracs_default"  # "bracs_default" | "custom"
    report: ValidationReport = field(default=ValidationReport(), compare=False)

    def __post_init__(self) -> None:
        ids = [r.id for r in self.records]
        if len(ids) != len(set(ids)):
            dupes = [i for i, n in Counter(ids).items() if n > 1]
            raise ManifestError(f"duplicate record ids: {dupes[:5]}")

    @property
    def class_counts(self) -> dict[ClassLabel, int]:
        """Histogram of record labels, recomputed on every access."""
        counts = Counter(r.label for r in self.records)
        return {c: counts.get(c, 0) for c in CLASS_ORDER}

    def split_records(self, split: str) -> tuple[SampleRecord, ...]:
        return tuple(r for r in self.records if r.split == split)

    def split_counts(self, split: str) -> dict[ClassLabel, int]:
        counts = Counter(r.label for r in self.records if r.split == split)
        return {c: counts.get(c, 0) for c in CLASS_ORDER}

    def __len__(self) -> int:
        return len(self.records)


def _check_readable(path: Path) -> str | None:
    """Return a reason string when the file cannot serve as an image record."""
    if not path.is_file():
        return "file not found"
    if path.stat().st_size == 0:
        return "empty file"
    try:
        with Image.open(path) as im:
            im.verify()
    except Exception as exc:
        return f"unreadable image ({exc})"
    return None


def _discover_class_dir(class_dir: Path, split: str, excluded: list[tuple[str, str]]) -> list[SampleRecord]:
    label = parse_label(class_dir.name)
    records = []
    for path in sorted(class_dir.iterdir()):
        if path.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        reason = _check_readable(path)
        if reason is not None:
            excluded.append((str(path), reason))
            continue
        rec_id = f"{split}/{label.value}/{path.stem}"
        records.append(SampleRecord(rec_id, path, label, split))
    return records


def load_manifest(root: Path | str, layout: str = "bracs_folders") -> DatasetManifest:
    """Build a manifest from a dataset directory.

    ``bracs_folders`` expects ``root/{train,val,test}/<CLASS>/*`` (the BRACS
    distribution layout); class folders directly under ``root`` are also
    accepted and assigned to the train split. ``csv_index`` expects a
    ``manifest.csv`` with columns id,path,label,split under ``root`` (or
    ``root`` itself pointing at the CSV).
    """
    root = Path(root)
    if not root.exists():
        raise ManifestError(f"dataset root does not exist: {root}")
    if layout == "bracs_folders":
        return _load_bracs_folders(root)
    if layout == "csv_index":
        csv_path = root if root.is_file() else root / "manifest.csv"
        return read_manifest_csv(csv_path)
    raise ManifestError(f"unknown layout {layout!r} (expected bracs_folders or csv_index)")


def _load_bracs_folders(root: Path) -> DatasetManifest:
    excluded: list[tuple[str, str]] = []
    records: list[SampleRecord] = []
    split_dirs = [d for d in root.iterdir() if d.is_dir() and d.name.lower() in SPLITS]
    if split_dirs:
        for split_dir in sorted(split_dirs):
            for class_dir in sorted(d for d in split_dir.iterdir() if d.is_dir()):
                records.extend(_discover_class_dir(class_dir, split_dir.name.lower(), excluded))
    else:
        for class_dir in sorted(d for d in root.iterdir() if d.is_dir()):
            records.extend(_discover_class_dir(class_dir, "train", excluded))
    if not records:
        raise ManifestError(f"no samples found under {root}")
    return DatasetManifest(tuple(records), "bracs_default", ValidationReport(tuple(excluded)))


def read_manifest_csv(csv_path: Path | str) -> DatasetManifest:
    """Read an id,path,label,split CSV index. Relative paths resolve against the CSV."""
    csv_path = Path(csv_path)
    if not csv_path.is_file():
        raise ManifestError(f"manifest CSV not found: {csv_path}")
    excluded: list[tuple[str, str]] = []
    records: list[SampleRecord] = []
    with csv_path.open(newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != MANIFEST_COLUMNS:
            raise ManifestError(
                f"{csv_path}: expected header {','.join(MANIFEST_COLUMNS)}, got {reader.fieldnames}"
            )
        for row in reader:
            path = Path(row["path"])
            if not path.is_absolute():
                path = csv_path.parent / path
            reason = _check_readable(path)
            if reason is not None:
                excluded.append((str(path), reason))
                continue
            records.append(SampleRecord(row["id"], path, parse_label(row["label"]), row["split"]))
    if not records:
        raise ManifestError(f"no samples found in {csv_path}")
    return DatasetManifest(tuple(records), "bracs_default", ValidationReport(tuple(excluded)))


def write_manifest_csv(manifest: DatasetManifest, csv_path: Path | str) -> None:
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with csv_path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(MANIFEST_COLUMNS)
        for r in manifest.records:
            writer.writerow([r.id, str(r.image_path), r.label.value, r.split])


def custom_split(
    manifest: DatasetManifest,
    probs: tuple[float, float, float],
    seed: int,
) -> DatasetManifest:
    """Reassign every record independently at random to train/val/test.

    Existing split labels are discarded first; the draw is a pure function of
    (record order, probs, seed).
    """
    if len(manifest) == 0:
        raise ManifestError("cannot split an empty manifest")
    if abs(sum(probs) - 1.0) > 1e-9:
        raise ManifestError(f"split probabilities must sum to 1, got {probs} (sum={sum(probs)})")
    rng = np.random.default_rng(seed)
    assignment = rng.choice(3, size=len(manifest), p=list(probs))
    records = tuple(
        replace(r, split=SPLITS[a]) for r, a in zip(manifest.records, assignment)
    )
    warnings = tuple(
        f"split {SPLITS[i]!r} is empty under probs={probs}, seed={seed}"
        for i in range(3)
        if not np.any(assignment == i)
    )
    return DatasetManifest(records, "custom", ValidationReport(warnings=warnings))


def upsample(manifest: DatasetManifest, target_per_class: int, seed: int = 0) -> DatasetManifest:
    """Duplicate train records of under-represented classes up to an exact target.

    Copies cycle round-robin through a seeded shuffle of the class's originals;
    classes at or above the target, and the val/test splits, are untouched.
    Classes absent from the manifest entirely are skipped.
    """
    if target_per_class < 1:
        raise ManifestError(f"target_per_class must be >= 1, got {target_per_class}")
    train_counts = manifest.split_counts("train")
    total_counts = manifest.class_counts
    new_records = list(manifest.records)
    rng = np.random.default_rng(seed)
    for label in CLASS_ORDER:
        if total_counts[label] == 0:
            continue
        if train_counts[label] == 0:
            raise ManifestError(
                f"class {label.value} has no train samples to upsample from"
            )
        deficit = target_per_class - train_counts[label]
        if deficit <= 0:
            continue
        originals = [r for r in manifest.records if r.split == "train" and r.label == label]
        order = rng.permutation(len(originals))
        for k in range(deficit):
            src = originals[order[k % len(originals)]]
            new_records.append(
                replace(
                    src,
                    id=f"{src.id}__up{k}",
                    origin="upsample_copy",
                    source_id=src.id,
                )
            )
    return DatasetManifest(tuple(new_records), manifest.split_mode, manifest.report)


def build_manifest(records: Iterable[SampleRecord], split_mode: str = "bracs_default") -> DatasetManifest:
    """Assemble a manifest from records without touching the filesystem (tests, tools)."""
    return DatasetManifest(tuple(records), split_mode)
