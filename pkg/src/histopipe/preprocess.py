"""Image standardisation: loading, resize, background graying, stain transfer.

Images are uint8 RGB arrays of shape (H, W, 3) throughout. All operations are
pure (new array out) and safe to run concurrently across images.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np
from PIL import Image

DEFAULT_LUMINANCE_THRESHOLD = 240
NEUTRAL_GRAY = (128, 128, 128)

# Rec.601 luma coefficients.
_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float64)


class PreprocessError(ValueError):
    """Fatal preprocessing configuration error."""


def load_image(path: Path | str) -> np.ndarray:
    """Load PNG/JPEG/TIFF as uint8 RGB; grayscale inputs replicate across channels."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return arr


def check_image(image: np.ndarray) -> np.ndarray:
    if image.ndim != 3 or image.shape[2] != 3:
        raise PreprocessError(f"expected (H, W, 3) RGB image, got shape {image.shape}")
    if image.shape[0] < 1 or image.shape[1] < 1:
        raise PreprocessError(f"degenerate image dims {image.shape[:2]}")
    return image


def resize(image: np.ndarray, target_dims: tuple[int, int]) -> np.ndarray:
    """Direct bilinear rescale to (height, width); aspect ratio is not preserved."""
    check_image(image)
    th, tw = target_dims
    if th < 1 or tw < 1:
        raise PreprocessError(f"resize target must be positive, got {target_dims}")
    if (image.shape[0], image.shape[1]) == (th, tw):
        return image.copy()
    out = cv2.resize(image, (tw, th), interpolation=cv2.INTER_LINEAR)
    return np.ascontiguousarray(out)


def luminance(image: np.ndarray) -> np.ndarray:
    """Per-pixel Rec.601 luminance as float64 (H, W)."""
    return image.astype(np.float64) @ _LUMA


def gray_out_noise(image: np.ndarray, luminance_threshold: int = DEFAULT_LUMINANCE_THRESHOLD) -> np.ndarray:
    """Replace near-white background/artifact pixels with neutral gray.

    A pixel is background when its luminance exceeds the threshold; tissue
    pixels are left untouched. Idempotent: the gray fill never re-triggers.
    """
    check_image(image)
    out = image.copy()
    out[luminance(image) > luminance_threshold] = NEUTRAL_GRAY
    return out


@dataclass(frozen=True)
class StainStats:
    """Channel means/stds in CIELAB space, taken from a reference tile."""

    means: tuple[float, float, float]
    stds: tuple[float, float, float]

    def __post_init__(self) -> None:
        if any(s <= 1e-8 for s in self.stds):
            raise PreprocessError(
                f"degenerate stain reference: zero-variance channel in stds={self.stds}"
            )


# sRGB <-> CIELAB (D65), float64 throughout so constant inputs stay exactly
# constant and the self-reference round trip is within one intensity level.
_RGB_TO_XYZ = np.array(
    [[0.4124564, 0.3575761, 0.1804375],
     [0.2126729, 0.7151522, 0.0721750],
     [0.0193339, 0.1191920, 0.9503041]]
)
_XYZ_WHITE = np.array([0.95047, 1.0, 1.08883])
_LAB_DELTA = 6.0 / 29.0


def rgb_to_lab(image: np.ndarray) -> np.ndarray:
    srgb = image.astype(np.float64) / 255.0
    linear = np.where(srgb <= 0.04045, srgb / 12.92, ((srgb + 0.055) / 1.055) ** 2.4)
    xyz = linear @ _RGB_TO_XYZ.T / _XYZ_WHITE
    f = np.where(xyz > _LAB_DELTA**3, np.cbrt(xyz), xyz / (3 * _LAB_DELTA**2) + 4.0 / 29.0)
    lab = np.empty_like(xyz)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def lab_to_rgb(lab: np.ndarray) -> np.ndarray:
    fy = (lab[..., 0] + 16.0) / 116.0
    f = np.stack([fy + lab[..., 1] / 500.0, fy, fy - lab[..., 2] / 200.0], axis=-1)
    xyz = np.where(f > _LAB_DELTA, f**3, 3 * _LAB_DELTA**2 * (f - 4.0 / 29.0)) * _XYZ_WHITE
    linear = xyz @ np.linalg.inv(_RGB_TO_XYZ).T
    linear = np.clip(linear, 0.0, 1.0)
    srgb = np.where(linear <= 0.0031308, linear * 12.92, 1.055 * linear ** (1 / 2.4) - 0.055)
    return np.clip(np.rint(srgb * 255.0), 0, 255).astype(np.uint8)


def stain_stats(image: np.ndarray) -> StainStats:
    """Compute reference statistics for :func:`stain_normalize`."""
    check_image(image)
    lab = rgb_to_lab(image).reshape(-1, 3)
    means = lab.mean(axis=0)
    stds = lab.std(axis=0)
    return StainStats(tuple(float(m) for m in means), tuple(float(s) for s in stds))


def stain_normalize(image: np.ndarray, reference: StainStats) -> np.ndarray:
    """Match the image's colour distribution to the reference tile.

    Channel-wise mean/std transfer in CIELAB: each channel is recentred on
    the reference mean and rescaled by the std ratio. A zero-variance source
    channel maps flat onto the reference mean.
    """
    check_image(image)
    lab = rgb_to_lab(image)
    means = lab.reshape(-1, 3).mean(axis=0)
    stds = lab.reshape(-1, 3).std(axis=0)
    out = np.empty_like(lab)
    for c in range(3):
        scale = reference.stds[c] / stds[c] if stds[c] > 1e-8 else 0.0
        out[:, :, c] = (lab[:, :, c] - means[c]) * scale + reference.means[c]
    return lab_to_rgb(out)


@dataclass(frozen=True)
class PreprocessSpec:
    """Deterministic per-image standardisation applied to every split.

    ``target_dims`` is (height, width); None leaves the size to a downstream
    stage (e.g. tiling). Pipeline order: resize, stain transfer, background
    graying (graying last keeps the gray fill out of the stain statistics).
    """

    target_dims: tuple[int, int] | None = (512, 512)
    gray_noise: bool = False
    luminance_threshold: int = DEFAULT_LUMINANCE_THRESHOLD
    stain_norm: str = "none"  # "none" | "reference_based"
    stain_reference: StainStats | None = None

    def __post_init__(self) -> None:
        if self.target_dims is not None and min(self.target_dims) < 1:
            raise PreprocessError(f"target_dims must be positive, got {self.target_dims}")
        if self.stain_norm not in ("none", "reference_based"):
            raise PreprocessError(f"unknown stain_norm mode {self.stain_norm!r}")
        if self.stain_norm == "reference_based" and self.stain_reference is None:
            raise PreprocessError("stain_norm=reference_based requires stain_reference statistics")


def apply_preprocess(image: np.ndarray, spec: PreprocessSpec) -> np.ndarray:
    check_image(image)
    out = image
    if spec.target_dims is not None:
        out = resize(out, spec.target_dims)
    if spec.stain_norm == "reference_based":
        out = stain_normalize(out, spec.stain_reference)
    if spec.gray_noise:
        out = gray_out_noise(out, spec.luminance_threshold)
    return out
