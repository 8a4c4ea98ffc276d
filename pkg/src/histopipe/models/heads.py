"""Classification heads: spatial attention pooling and four-stage pyramid fusion."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .backbones import Backbone, ModelConfig, ModelError, build_backbone


class AttentionPool(nn.Module):
    """Softmax attention over spatial positions of a (B, C, H, W) feature map.

    A 1x1 conv scores each position; the softmax-normalized scores weight a
    sum over positions, giving one C-vector per sample. Weights are returned
    for inspection and always form a probability distribution.
    """

    def __init__(self, channels: int):
        super().__init__()
        self.score = nn.Conv2d(channels, 1, kernel_size=1)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        b, c, h, w = x.shape
        scores = self.score(x).view(b, h * w)
        weights = F.softmax(scores, dim=1)
        pooled = torch.bmm(x.view(b, c, h * w), weights.unsqueeze(2)).squeeze(2)
        return pooled, weights.view(b, 1, h, w)


class AttentionHead(nn.Module):
    """Attention pooling over the deepest feature map, then dropout and a linear map."""

    def __init__(self, in_channels: int, num_classes: int, dropout: float):
        super().__init__()
        self.pool = AttentionPool(in_channels)
        self.dropout = nn.Dropout(dropout)
        self.classifier = nn.Linear(in_channels, num_classes)
        self.last_attention: torch.Tensor | None = None

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        if features.dim() != 4 or features.shape[1] != self.pool.score.in_channels:
            raise ModelError(
                f"attention head expects (B, {self.pool.score.in_channels}, H, W), "
                f"got {tuple(features.shape)}"
            )
        pooled, weights = self.pool(features)
        self.last_attention = weights.detach()
        return self.classifier(self.dropout(pooled))


class PyramidHead(nn.Module):
    """Convolutional attention over each of four stages, fused by concatenation.

    Each stage is projected to a common width by a 1x1 conv, attention-pooled
    to a vector, and the four vectors are concatenated (4 * width) before
    dropout and the linear classifier.
    """

    def __init__(self, stage_channels: tuple[int, ...], num_classes: int, dropout: float,
                 width: int = 256):
        super().__init__()
        if len(stage_channels) != 4:
            raise ModelError(f"pyramid head needs 4 stage widths, got {stage_channels}")
        self.projections = nn.ModuleList(nn.Conv2d(c, width, kernel_size=1) for c in stage_channels)
        self.pools = nn.ModuleList(AttentionPool(width) for _ in range(4))
        self.dropout = nn.Dropout(dropout)
        self.classifier = nn.Linear(4 * width, num_classes)
        self.last_attention: list[torch.Tensor] | None = None

    def forward(self, stages: list[torch.Tensor]) -> torch.Tensor:
        if len(stages) != 4:
            raise ModelError(f"pyramid head expects 4 stage activations, got {len(stages)}")
        vectors = []
        attention = []
        for proj, pool, feat in zip(self.projections, self.pools, stages):
            pooled, weights = pool(proj(feat))
            vectors.append(pooled)
            attention.append(weights.detach())
        self.last_attention = attention
        fused = torch.cat(vectors, dim=1)
        return self.classifier(self.dropout(fused))


class HistologyClassifier(nn.Module):
    """Backbone plus head, built from a ModelConfig; forward(x) -> logits (B, classes)."""

    def __init__(self, config: ModelConfig, backbone: Backbone | None = None):
        super().__init__()
        self.config = config
        self.backbone = backbone if backbone is not None else build_backbone(config)
        if config.head == "attention":
            self.head = AttentionHead(self.backbone.stage_channels[-1], config.num_classes,
                                      config.dropout)
        else:
            self.head = PyramidHead(self.backbone.stage_channels, config.num_classes,
                                    config.dropout, config.pyramid_width)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        _, stages = self.backbone(x)
        if isinstance(self.head, AttentionHead):
            return self.head(stages[-1])
        return self.head(stages)


def build_model(config: ModelConfig) -> HistologyClassifier:
    return HistologyClassifier(config)


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def describe_model(config: ModelConfig) -> str:
    """Human-readable construction report: parameter counts and stage shapes."""
    from .backbones import feature_info

    model = build_model(config)
    info = feature_info(model.backbone, config.input_dims)
    lines = [
        f"backbone: {config.backbone} (pretrained={config.pretrained})",
        f"head: {config.head} (dropout={config.dropout})",
        f"input: {config.input_dims[0]}x{config.input_dims[1]}, classes: {config.num_classes}",
        f"parameters: {parameter_count(model):,} "
        f"(backbone {parameter_count(model.backbone):,}, head {parameter_count(model.head):,})",
        "stages (C, H, W): " + ", ".join(str(d) for d in info["feature_dims"]),
        f"pooled dim: {info['pooled_dim']}",
    ]
    return "\n".join(lines)
