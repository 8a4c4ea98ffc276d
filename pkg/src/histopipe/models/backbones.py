"""Backbone construction: the five architectures behind a uniform interface.

Every backbone maps an RGB batch to (pooled_vector, [four stage activations
shallow to deep]). ResNet50 and EfficientNet come from torchvision and can
load ImageNet weights; Xception, InceptionResNet, and ConvNextTinyV2 are
built in-package (no hosted weights in this environment), plus a "tiny"
conv net for fast tests and smoke runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .convnext_v2 import ConvNeXtV2Tiny
from .inception_resnet import InceptionResNetV2
from .xception import Xception


class ModelError(ValueError):
    """Fatal model configuration error."""


BACKBONE_NAMES = ("xception", "efficientnet", "resnet50", "convnexttiny_v2", "inception_resnet")
TEST_BACKBONES = ("tiny",)


@dataclass(frozen=True)
class ModelConfig:
    backbone: str = "resnet50"
    head: str = "attention"  # "attention" | "pyramid"
    dropout: float = 0.45
    num_classes: int = 7
    input_dims: tuple[int, int] = (512, 512)
    pretrained: bool = False
    pyramid_width: int = 256

    def __post_init__(self) -> None:
        if self.backbone not in BACKBONE_NAMES + TEST_BACKBONES:
            raise ModelError(
                f"unknown backbone {self.backbone!r} "
                f"(valid: {', '.join(BACKBONE_NAMES + TEST_BACKBONES)})"
            )
        if self.head not in ("attention", "pyramid"):
            raise ModelError(f"unknown head {self.head!r} (valid: attention, pyramid)")
        if not 0.0 <= self.dropout < 1.0:
            raise ModelError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.num_classes < 2:
            raise ModelError(f"num_classes must be >= 2, got {self.num_classes}")


class Backbone(nn.Module):
    """Uniform wrapper: forward(x) -> (pooled (B, C), stages [4 x (B, C_i, H, W)])."""

    def __init__(self, name: str, features: nn.Module, stage_channels: tuple[int, ...],
                 pooled_channels: int, pretrained: bool):
        super().__init__()
        self.name = name
        self.features = features
        self.stage_channels = stage_channels
        self.pooled_channels = pooled_channels
        self.pretrained = pretrained
        self.pool = nn.AdaptiveAvgPool2d(1)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        stages = self.features(x)
        pooled = self.pool(stages[-1]).flatten(1)
        return pooled, stages


class _ResNet50Stages(nn.Module):
    def __init__(self, pretrained: bool):
        super().__init__()
        from torchvision.models import resnet50, ResNet50_Weights

        net = resnet50(weights=_weights(ResNet50_Weights.IMAGENET1K_V2, pretrained, "resnet50"))
        self.stem = nn.Sequential(net.conv1, net.bn1, net.relu, net.maxpool)
        self.layers = nn.ModuleList([net.layer1, net.layer2, net.layer3, net.layer4])

    def forward(self, x):
        x = self.stem(x)
        out = []
        for layer in self.layers:
            x = layer(x)
            out.append(x)
        return out


class _EfficientNetStages(nn.Module):
    # stage block indices at strides 4/8/16/32; the final 1x1 conv feeds pooling
    STAGE_IDX = (2, 3, 5, 8)

    def __init__(self, pretrained: bool):
        super().__init__()
        from torchvision.models import efficientnet_b0, EfficientNet_B0_Weights

        net = efficientnet_b0(
            weights=_weights(EfficientNet_B0_Weights.IMAGENET1K_V1, pretrained, "efficientnet")
        )
        self.blocks = net.features

    def forward(self, x):
        out = []
        for i, block in enumerate(self.blocks):
            x = block(x)
            if i in self.STAGE_IDX:
                out.append(x)
        return out


class _TinyStages(nn.Module):
    """Four small conv stages; fast CPU smoke-test backbone."""

    def __init__(self):
        super().__init__()
        chans = (3, 8, 16, 24, 32)
        self.stages = nn.ModuleList(
            nn.Sequential(
                nn.Conv2d(chans[i], chans[i + 1], 3, stride=2, padding=1),
                nn.BatchNorm2d(chans[i + 1]),
                nn.ReLU(inplace=False),
            )
            for i in range(4)
        )

    def forward(self, x):
        out = []
        for stage in self.stages:
            x = stage(x)
            out.append(x)
        return out


def _weights(enum_value, pretrained: bool, name: str):
    if not pretrained:
        return None
    try:
        # force the download/cache path now so failures surface at build time
        enum_value.get_state_dict(progress=False)
    except Exception as exc:
        raise ModelError(
            f"failed to fetch ImageNet weights for {name}: {exc}. "
            "Download them on a connected machine into $TORCH_HOME/hub/checkpoints, "
            "or build with pretrained=false."
        ) from exc
    return enum_value


def _no_pretrained(name: str, pretrained: bool) -> None:
    if pretrained:
        raise ModelError(
            f"no hosted ImageNet weights for {name} in this environment; "
            "build with pretrained=false or load a checkpoint after construction."
        )


def build_backbone(config: ModelConfig) -> Backbone:
    """Construct the named backbone; pretrained=True loads ImageNet weights."""
    name = config.backbone
    if name == "resnet50":
        return Backbone(name, _ResNet50Stages(config.pretrained), (256, 512, 1024, 2048), 2048,
                        config.pretrained)
    if name == "efficientnet":
        features = _EfficientNetStages(config.pretrained)
        return Backbone(name, features, (24, 40, 112, 1280), 1280, config.pretrained)
    if name == "xception":
        _no_pretrained(name, config.pretrained)
        net = Xception()
        return Backbone(name, net, net.stage_channels, net.pooled_channels, False)
    if name == "inception_resnet":
        _no_pretrained(name, config.pretrained)
        net = InceptionResNetV2()
        return Backbone(name, net, net.stage_channels, net.pooled_channels, False)
    if name == "convnexttiny_v2":
        _no_pretrained(name, config.pretrained)
        net = ConvNeXtV2Tiny()
        return Backbone(name, net, net.stage_channels, net.pooled_channels, False)
    if name == "tiny":
        return Backbone(name, _TinyStages(), (8, 16, 24, 32), 32, False)
    raise ModelError(f"unknown backbone {name!r} (valid: {', '.join(BACKBONE_NAMES)})")


def feature_info(backbone: Backbone, input_dims: tuple[int, int]) -> dict:
    """Dry-run shape report: per-stage (C, H, W) triples and the pooled width."""
    backbone.eval()
    with torch.no_grad():
        pooled, stages = backbone(torch.zeros(1, 3, *input_dims))
    return {
        "feature_dims": [tuple(s.shape[1:]) for s in stages],
        "pooled_dim": pooled.shape[1],
    }
