"""Xception feature extractor (depthwise-separable conv architecture).

Standard entry/middle/exit flow; exposes the four resolution stages at
strides 4, 8, 16, 32 with channel widths 128, 256, 728, 2048.
"""

from __future__ import annotations

import torch
import torch.nn as nn


class SeparableConv2d(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, stride: int = 1):
        super().__init__()
        self.depthwise = nn.Conv2d(in_ch, in_ch, 3, stride, padding=1, groups=in_ch, bias=False)
        self.pointwise = nn.Conv2d(in_ch, out_ch, 1, bias=False)

    def forward(self, x):
        return self.pointwise(self.depthwise(x))


class XceptionBlock(nn.Module):
    """Residual block of separable convs, optionally downsampling via maxpool."""

    def __init__(self, in_ch: int, out_ch: int, reps: int, stride: int = 1,
                 start_with_relu: bool = True, grow_first: bool = True):
        super().__init__()
        if out_ch != in_ch or stride != 1:
            self.skip = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_ch),
            )
        else:
            self.skip = nn.Identity()
        layers: list[nn.Module] = []
        ch = in_ch
        if grow_first:
            layers += [nn.ReLU(inplace=False), SeparableConv2d(in_ch, out_ch), nn.BatchNorm2d(out_ch)]
            ch = out_ch
        for _ in range(reps - 1):
            layers += [nn.ReLU(inplace=False), SeparableConv2d(ch, ch), nn.BatchNorm2d(ch)]
        if not grow_first:
            layers += [nn.ReLU(inplace=False), SeparableConv2d(in_ch, out_ch), nn.BatchNorm2d(out_ch)]
        if not start_with_relu:
            layers = layers[1:]
        if stride != 1:
            layers.append(nn.MaxPool2d(3, stride, padding=1))
        self.body = nn.Sequential(*layers)

    def forward(self, x):
        return self.body(x) + self.skip(x)


class Xception(nn.Module):
    stage_channels = (128, 256, 728, 2048)
    pooled_channels = 2048

    def __init__(self):
        super().__init__()
        self.stem = nn.Sequential(
            nn.Conv2d(3, 32, 3, stride=2, padding=1, bias=False),
            nn.BatchNorm2d(32),
            nn.ReLU(inplace=False),
            nn.Conv2d(32, 64, 3, padding=1, bias=False),
            nn.BatchNorm2d(64),
            nn.ReLU(inplace=False),
        )
        self.block1 = XceptionBlock(64, 128, reps=2, stride=2, start_with_relu=False)
        self.block2 = XceptionBlock(128, 256, reps=2, stride=2)
        self.block3 = XceptionBlock(256, 728, reps=2, stride=2)
        self.middle = nn.Sequential(
            *[XceptionBlock(728, 728, reps=3) for _ in range(8)]
        )
        self.exit_block = XceptionBlock(728, 1024, reps=2, stride=2, grow_first=False)
        self.exit_convs = nn.Sequential(
            SeparableConv2d(1024, 1536),
            nn.BatchNorm2d(1536),
            nn.ReLU(inplace=False),
            SeparableConv2d(1536, 2048),
            nn.BatchNorm2d(2048),
            nn.ReLU(inplace=False),
        )

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        """Return the four stage activations, shallow to deep."""
        x = self.stem(x)
        s4 = self.block1(x)
        s8 = self.block2(s4)
        s16 = self.middle(self.block3(s8))
        s32 = self.exit_convs(self.exit_block(s16))
        return [s4, s8, s16, s32]
