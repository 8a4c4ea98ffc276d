"""Train-time stochastic augmentation: spatial/photometric transforms plus
batch-level cutmix and mixup with soft-label targets.

Per-sample transforms take and return uint8 RGB arrays; batch transforms take
float image stacks of shape (B, ...) and label matrices of shape (B, C).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import cv2
import numpy as np

log = logging.getLogger(__name__)


class AugmentError(ValueError):
    """Fatal augmentation configuration error."""


@dataclass(frozen=True)
class AugmentSpec:
    rotation90: bool = True
    hflip_prob: float = 0.5
    vflip_prob: float = 0.5
    shift_fraction: float = 0.1
    zoom_range: float = 0.1
    brightness_delta: float = 0.1
    blur_sharpen: bool = False
    cutmix_prob: float = 0.0
    cutmix_alpha: float = 1.0
    mixup_prob: float = 0.0
    mixup_alpha: float = 1.0

    def __post_init__(self) -> None:
        for name in ("hflip_prob", "vflip_prob", "cutmix_prob", "mixup_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise AugmentError(f"{name} must be in [0, 1], got {v}")
        for name in ("shift_fraction", "zoom_range", "brightness_delta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise AugmentError(f"{name} must be in [0, 1], got {v}")
        for name in ("cutmix_alpha", "mixup_alpha"):
            if getattr(self, name) <= 0:
                raise AugmentError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.cutmix_prob + self.mixup_prob > 1.0 + 1e-9:
            raise AugmentError("cutmix_prob + mixup_prob must not exceed 1 (mutually exclusive per batch)")

    @classmethod
    def disabled(cls) -> "AugmentSpec":
        return cls(rotation90=False, hflip_prob=0.0, vflip_prob=0.0, shift_fraction=0.0,
                   zoom_range=0.0, brightness_delta=0.0, blur_sharpen=False,
                   cutmix_prob=0.0, mixup_prob=0.0)


def one_hot(index: int, num_classes: int) -> np.ndarray:
    label = np.zeros(num_classes, dtype=np.float64)
    label[index] = 1.0
    return label


def check_soft_labels(labels: np.ndarray, atol: float = 1e-6) -> np.ndarray:
    if np.any(labels < -atol):
        raise AugmentError("soft labels must be nonnegative")
    sums = labels.sum(axis=-1)
    if not np.allclose(sums, 1.0, atol=atol):
        raise AugmentError(f"soft labels must sum to 1, got sums {sums}")
    return labels


def rotate90(image: np.ndarray, k: int) -> np.ndarray:
    """Clockwise rotation by 90*(k mod 4) degrees; odd k swaps height/width."""
    k = k % 4
    if k == 0:
        return image.copy()
    return np.ascontiguousarray(np.rot90(image, -k, axes=(0, 1)))


def _shift(image: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Translate with edge replication, keeping dims."""
    h, w = image.shape[:2]
    padded = np.pad(image, ((abs(dy), abs(dy)), (abs(dx), abs(dx)), (0, 0)), mode="edge")
    y0 = abs(dy) - dy
    x0 = abs(dx) - dx
    return np.ascontiguousarray(padded[y0 : y0 + h, x0 : x0 + w])


def _zoom(image: np.ndarray, factor: float) -> np.ndarray:
    """Zoom in (central crop) or out (shrink + edge pad), keeping dims."""
    h, w = image.shape[:2]
    if factor > 1.0:
        nh, nw = max(1, round(h / factor)), max(1, round(w / factor))
        y0, x0 = (h - nh) // 2, (w - nw) // 2
        crop = image[y0 : y0 + nh, x0 : x0 + nw]
        return np.ascontiguousarray(cv2.resize(crop, (w, h), interpolation=cv2.INTER_LINEAR))
    nh, nw = max(1, round(h * factor)), max(1, round(w * factor))
    small = cv2.resize(image, (nw, nh), interpolation=cv2.INTER_LINEAR)
    top = (h - nh) // 2
    left = (w - nw) // 2
    return np.ascontiguousarray(
        np.pad(small, ((top, h - nh - top), (left, w - nw - left), (0, 0)), mode="edge")
    )


def _brightness(image: np.ndarray, delta: float) -> np.ndarray:
    return np.clip(image.astype(np.int16) + round(delta * 255), 0, 255).astype(np.uint8)


_SHARPEN_KERNEL = np.array([[0, -1, 0], [-1, 5, -1], [0, -1, 0]], dtype=np.float32)


def apply_spatial(image: np.ndarray, spec: AugmentSpec, rng: np.random.Generator) -> np.ndarray:
    """Apply the per-sample transform chain in fixed order.

    Order: hflip, vflip, rotate90, shift, zoom, brightness, blur/sharpen.
    Output dims always equal input dims; on non-square images the rotation is
    restricted to k in {0, 2} so the contract holds.
    """
    out = image
    if spec.hflip_prob > 0 and rng.random() < spec.hflip_prob:
        out = out[:, ::-1]
    if spec.vflip_prob > 0 and rng.random() < spec.vflip_prob:
        out = out[::-1, :]
    if spec.rotation90:
        k = int(rng.integers(0, 4))
        if out.shape[0] != out.shape[1] and k % 2 == 1:
            k = (k + 1) % 4
        out = rotate90(out, k)
    else:
        out = np.ascontiguousarray(out)
    if spec.shift_fraction > 0:
        dy = round(float(rng.uniform(-spec.shift_fraction, spec.shift_fraction)) * out.shape[0])
        dx = round(float(rng.uniform(-spec.shift_fraction, spec.shift_fraction)) * out.shape[1])
        if dy or dx:
            out = _shift(out, dy, dx)
    if spec.zoom_range > 0:
        factor = float(rng.uniform(1.0 - spec.zoom_range, 1.0 + spec.zoom_range))
        if abs(factor - 1.0) > 1e-9:
            out = _zoom(out, factor)
    if spec.brightness_delta > 0:
        delta = float(rng.uniform(-spec.brightness_delta, spec.brightness_delta))
        if round(delta * 255) != 0:
            out = _brightness(out, delta)
    if spec.blur_sharpen:
        if rng.random() < 0.5:
            out = cv2.GaussianBlur(out, (3, 3), 0)
        else:
            out = np.clip(
                cv2.filter2D(out.astype(np.float32), -1, _SHARPEN_KERNEL), 0, 255
            ).astype(np.uint8)
    return out


def mixup_with_lambda(
    images: np.ndarray, labels: np.ndarray, lam: float, partner: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic core of mixup: convex-combine each sample with its partner."""
    mixed = lam * images + (1.0 - lam) * images[partner]
    mixed_labels = lam * labels + (1.0 - lam) * labels[partner]
    return mixed, mixed_labels


def mixup(
    images: np.ndarray, labels: np.ndarray, alpha: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Blend each sample with a shuffled partner; lambda ~ Beta(alpha, alpha)."""
    if images.shape[0] < 2:
        log.warning("mixup skipped: batch of %d", images.shape[0])
        return images, labels
    lam = float(rng.beta(alpha, alpha))
    partner = rng.permutation(images.shape[0])
    if images.dtype.kind in "ui":
        images = images.astype(np.float32)
    return mixup_with_lambda(images, labels, lam, partner)


def cutmix_with_rect(
    images: np.ndarray,
    labels: np.ndarray,
    rect: tuple[int, int, int, int],
    partner: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic core of cutmix: paste a partner patch, mix labels by area.

    ``rect`` is (x0, y0, x1, y1) in pixel coordinates, already clipped; the
    label weight of the partner equals the realized patch area fraction.
    """
    b, h, w = images.shape[:3]
    x0, y0, x1, y1 = rect
    area_frac = max(0, x1 - x0) * max(0, y1 - y0) / (h * w)
    mixed = images.copy()
    if area_frac > 0:
        mixed[:, y0:y1, x0:x1] = images[partner][:, y0:y1, x0:x1]
    mixed_labels = (1.0 - area_frac) * labels + area_frac * labels[partner]
    return mixed, mixed_labels


def cutmix(
    images: np.ndarray, labels: np.ndarray, alpha: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Paste a random partner rectangle into each image; batch size >= 2.

    The target rectangle area fraction is 1 - lambda with lambda ~
    Beta(alpha, alpha); after clipping to image bounds the label mix uses the
    realized area exactly.
    """
    if images.shape[0] < 2:
        log.warning("cutmix skipped: batch of %d", images.shape[0])
        return images, labels
    if images.ndim < 3:
        raise AugmentError(f"cutmix needs (B, H, W[, C]) images, got shape {images.shape}")
    h, w = images.shape[1], images.shape[2]
    lam = float(rng.beta(alpha, alpha))
    cut = float(np.sqrt(1.0 - lam))
    rh, rw = round(h * cut), round(w * cut)
    cy = int(rng.integers(0, h))
    cx = int(rng.integers(0, w))
    x0 = max(0, cx - rw // 2)
    y0 = max(0, cy - rh // 2)
    x1 = min(w, x0 + rw)
    y1 = min(h, y0 + rh)
    partner = rng.permutation(images.shape[0])
    return cutmix_with_rect(images, labels, (x0, y0, x1, y1), partner)


def batch_augment(
    images: np.ndarray, labels: np.ndarray, spec: AugmentSpec, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Apply at most one of cutmix/mixup per batch, chosen by spec probabilities."""
    if spec.cutmix_prob == 0.0 and spec.mixup_prob == 0.0:
        return images, labels
    u = rng.random()
    if u < spec.cutmix_prob:
        return cutmix(images, labels, spec.cutmix_alpha, rng)
    if u < spec.cutmix_prob + spec.mixup_prob:
        return mixup(images, labels, spec.mixup_alpha, rng)
    return images, labels
