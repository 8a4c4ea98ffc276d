"""Class-balancing strategies: inverse-frequency weighted sampling and
batch-balanced sampling over the train split.

Samplers yield indices into ``manifest.records`` and never leave the train
split. Both are deterministic for a fixed seed; an epoch is
ceil(n_train / batch_size) batches regardless of strategy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .labels import ClassLabel
from .manifest import DatasetManifest


class SamplingError(ValueError):
    """Fatal sampler configuration error."""


STRATEGIES = ("none", "weighted", "batch_balanced")


@dataclass(frozen=True)
class BatchPlan:
    batch_size: int
    strategy: str = "none"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise SamplingError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.strategy not in STRATEGIES:
            raise SamplingError(f"unknown strategy {self.strategy!r} (expected one of {STRATEGIES})")


def class_weights(counts: dict[ClassLabel, int]) -> dict[ClassLabel, float]:
    """Inverse-frequency weights normalized to sum 1; rarest class weighted highest."""
    present = {c: n for c, n in counts.items() if n != 0}
    if any(n < 0 for n in counts.values()):
        raise SamplingError(f"negative class count in {counts}")
    if not present:
        raise SamplingError("cannot weight an empty class histogram")
    if len(present) != len(counts):
        missing = [c.value for c, n in counts.items() if n == 0]
        raise SamplingError(f"zero count for class(es) {missing}: inverse weighting undefined")
    inv = {c: 1.0 / n for c, n in counts.items()}
    total = sum(inv.values())
    return {c: v / total for c, v in inv.items()}


def epoch_length(n_train: int, batch_size: int) -> int:
    return math.ceil(n_train / batch_size)


def _train_indices(manifest: DatasetManifest) -> list[int]:
    return [i for i, r in enumerate(manifest.records) if r.split == "train"]


def weighted_sampler(manifest: DatasetManifest, plan: BatchPlan) -> Iterator[int]:
    """Infinite i.i.d. index stream, each sample weighted by its class weight.

    Per-sample probability is proportional to the inverse frequency of the
    sample's class, which makes the long-run class frequencies uniform.
    """
    if plan.strategy != "weighted":
        raise SamplingError(f"weighted_sampler called with strategy {plan.strategy!r}")
    indices = _train_indices(manifest)
    if not indices:
        raise SamplingError("manifest has no train samples")
    counts = manifest.split_counts("train")
    weights = class_weights({c: n for c, n in counts.items() if n > 0})
    probs = np.array([weights[manifest.records[i].label] for i in indices], dtype=np.float64)
    probs /= probs.sum()
    index_arr = np.array(indices)
    rng = np.random.default_rng(plan.seed)

    def stream() -> Iterator[int]:
        while True:
            # draw in chunks; chunking is invisible to the consumed sequence
            for i in rng.choice(index_arr, size=4096, p=probs):
                yield int(i)

    return stream()


def balanced_batch_sampler(manifest: DatasetManifest, plan: BatchPlan) -> Iterator[list[int]]:
    """Infinite stream of batches holding an equal number of each train class.

    Each class keeps a cyclic pool: a seeded shuffle of its train indices,
    drawn without replacement and reshuffled on exhaustion, so no sample of a
    class repeats before the whole class has been seen.
    """
    if plan.strategy != "batch_balanced":
        raise SamplingError(f"balanced_batch_sampler called with strategy {plan.strategy!r}")
    indices = _train_indices(manifest)
    if not indices:
        raise SamplingError("manifest has no train samples")
    by_class: dict[ClassLabel, list[int]] = {}
    for i in indices:
        by_class.setdefault(manifest.records[i].label, []).append(i)
    n_classes = len(by_class)
    if plan.batch_size % n_classes != 0:
        raise SamplingError(
            f"batch_size {plan.batch_size} is not divisible by the class count {n_classes}"
        )
    per_class = plan.batch_size // n_classes
    rng = np.random.default_rng(plan.seed)
    labels = sorted(by_class, key=lambda c: c.index)

    def pool(items: list[int]) -> Iterator[int]:
        while True:
            for j in rng.permutation(len(items)):
                yield items[j]

    pools = {c: pool(by_class[c]) for c in labels}

    def stream() -> Iterator[list[int]]:
        while True:
            batch: list[int] = []
            for c in labels:
                batch.extend(next(pools[c]) for _ in range(per_class))
            yield batch

    return stream()


def sequential_sampler(manifest: DatasetManifest, plan: BatchPlan) -> Iterator[list[int]]:
    """Strategy "none": seeded reshuffle of the train split, one pass per epoch."""
    indices = _train_indices(manifest)
    if not indices:
        raise SamplingError("manifest has no train samples")
    rng = np.random.default_rng(plan.seed)
    index_arr = np.array(indices)

    def stream() -> Iterator[list[int]]:
        while True:
            order = rng.permutation(len(index_arr))
            for start in range(0, len(order), plan.batch_size):
                yield [int(i) for i in index_arr[order[start : start + plan.batch_size]]]

    return stream()


def batch_stream(manifest: DatasetManifest, plan: BatchPlan) -> Iterator[list[int]]:
    """Uniform batch-level interface over the three strategies."""
    if plan.strategy == "none":
        return sequential_sampler(manifest, plan)
    if plan.strategy == "weighted":
        stream = weighted_sampler(manifest, plan)

        def batches() -> Iterator[list[int]]:
            while True:
                yield [next(stream) for _ in range(plan.batch_size)]

        return batches()
    return balanced_batch_sampler(manifest, plan)
