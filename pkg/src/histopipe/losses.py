"""Classification losses (soft-label capable) and the cosine LR schedule.

All three losses accept either hard int64 targets of shape (B,) or soft label
matrices of shape (B, C); soft labels are required downstream of cutmix/mixup.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F


class LossError(ValueError):
    """Fatal loss configuration or input error."""


@dataclass(frozen=True)
class LossSpec:
    kind: str = "cross_entropy"  # cross_entropy | label_smoothing_ce | focal
    smoothing: float = 0.35
    gamma: float = 2.0

    def __post_init__(self) -> None:
        if self.kind not in ("cross_entropy", "label_smoothing_ce", "focal"):
            raise LossError(f"unknown loss kind {self.kind!r}")
        if not 0.0 <= self.smoothing < 1.0:
            raise LossError(f"smoothing must be in [0, 1), got {self.smoothing}")
        if self.gamma < 0:
            raise LossError(f"gamma must be >= 0, got {self.gamma}")


def _soft_targets(targets: torch.Tensor, num_classes: int) -> torch.Tensor:
    if targets.dim() == 1:
        return F.one_hot(targets.long(), num_classes).to(torch.get_default_dtype())
    return targets


def _check_logits(logits: torch.Tensor) -> None:
    if not torch.isfinite(logits).all():
        bad = (~torch.isfinite(logits)).sum().item()
        raise LossError(
            f"non-finite logits: {bad}/{logits.numel()} entries "
            f"(min={logits.min().item()}, max={logits.max().item()})"
        )


def cross_entropy(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Mean over the batch of -sum_c target_c * log softmax(logits)_c."""
    _check_logits(logits)
    targets = _soft_targets(targets, logits.shape[-1]).to(logits.dtype)
    return -(targets * F.log_softmax(logits, dim=-1)).sum(dim=-1).mean()


def label_smoothing_ce(
    logits: torch.Tensor, targets: torch.Tensor, smoothing: float = 0.35
) -> torch.Tensor:
    """Cross entropy against targets mixed with the uniform distribution."""
    _check_logits(logits)
    num_classes = logits.shape[-1]
    targets = _soft_targets(targets, num_classes).to(logits.dtype)
    smoothed = (1.0 - smoothing) * targets + smoothing / num_classes
    return -(smoothed * F.log_softmax(logits, dim=-1)).sum(dim=-1).mean()


def focal_loss(
    logits: torch.Tensor, targets: torch.Tensor, gamma: float = 2.0
) -> torch.Tensor:
    """Cross entropy with each class term down-weighted by (1 - p_c)**gamma."""
    _check_logits(logits)
    targets = _soft_targets(targets, logits.shape[-1]).to(logits.dtype)
    log_p = F.log_softmax(logits, dim=-1)
    focus = (1.0 - log_p.exp()) ** gamma
    return -(targets * focus * log_p).sum(dim=-1).mean()


def make_loss(spec: LossSpec):
    """Bind a LossSpec to a (logits, targets) -> scalar callable."""
    if spec.kind == "cross_entropy":
        return cross_entropy
    if spec.kind == "label_smoothing_ce":
        return lambda logits, targets: label_smoothing_ce(logits, targets, spec.smoothing)
    return lambda logits, targets: focal_loss(logits, targets, spec.gamma)


def cosine_lr(step: int, total_steps: int, base_lr: float, eta_min: float = 1e-6) -> float:
    """Half-cosine decay from base_lr at step 0 to eta_min at total_steps."""
    if total_steps <= 0:
        raise LossError(f"total_steps must be positive, got {total_steps}")
    if not 0 <= step <= total_steps:
        raise LossError(f"step {step} outside [0, {total_steps}]")
    return eta_min + (base_lr - eta_min) * (1.0 + math.cos(math.pi * step / total_steps)) / 2.0
