"""Inception-ResNet-v2 feature extractor.

Standard stem, 10x/20x/10x residual inception blocks with the two reduction
modules; exposes stages at strides 4, 8, 16, 32 with channel widths
64, 320, 1088, 1536.
"""

from __future__ import annotations

import torch
import torch.nn as nn


class ConvBN(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, kernel, stride: int = 1, padding=0):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, kernel, stride, padding, bias=False)
        self.bn = nn.BatchNorm2d(out_ch, eps=1e-3)
        self.act = nn.ReLU(inplace=False)

    def forward(self, x):
        return self.act(self.bn(self.conv(x)))


class Mixed5b(nn.Module):
    def __init__(self):
        super().__init__()
        self.branch0 = ConvBN(192, 96, 1)
        self.branch1 = nn.Sequential(ConvBN(192, 48, 1), ConvBN(48, 64, 5, padding=2))
        self.branch2 = nn.Sequential(
            ConvBN(192, 64, 1), ConvBN(64, 96, 3, padding=1), ConvBN(96, 96, 3, padding=1)
        )
        self.branch3 = nn.Sequential(
            nn.AvgPool2d(3, stride=1, padding=1, count_include_pad=False), ConvBN(192, 64, 1)
        )

    def forward(self, x):
        return torch.cat([self.branch0(x), self.branch1(x), self.branch2(x), self.branch3(x)], 1)


class Block35(nn.Module):
    def __init__(self, scale: float = 0.17):
        super().__init__()
        self.scale = scale
        self.branch0 = ConvBN(320, 32, 1)
        self.branch1 = nn.Sequential(ConvBN(320, 32, 1), ConvBN(32, 32, 3, padding=1))
        self.branch2 = nn.Sequential(
            ConvBN(320, 32, 1), ConvBN(32, 48, 3, padding=1), ConvBN(48, 64, 3, padding=1)
        )
        self.conv = nn.Conv2d(128, 320, 1)
        self.act = nn.ReLU(inplace=False)

    def forward(self, x):
        up = self.conv(torch.cat([self.branch0(x), self.branch1(x), self.branch2(x)], 1))
        return self.act(x + self.scale * up)


class Mixed6a(nn.Module):
    def __init__(self):
        super().__init__()
        self.branch0 = ConvBN(320, 384, 3, stride=2, padding=1)
        self.branch1 = nn.Sequential(
            ConvBN(320, 256, 1), ConvBN(256, 256, 3, padding=1),
            ConvBN(256, 384, 3, stride=2, padding=1),
        )
        self.branch2 = nn.MaxPool2d(3, stride=2, padding=1)

    def forward(self, x):
        return torch.cat([self.branch0(x), self.branch1(x), self.branch2(x)], 1)


class Block17(nn.Module):
    def __init__(self, scale: float = 0.10):
        super().__init__()
        self.scale = scale
        self.branch0 = ConvBN(1088, 192, 1)
        self.branch1 = nn.Sequential(
            ConvBN(1088, 128, 1),
            ConvBN(128, 160, (1, 7), padding=(0, 3)),
            ConvBN(160, 192, (7, 1), padding=(3, 0)),
        )
        self.conv = nn.Conv2d(384, 1088, 1)
        self.act = nn.ReLU(inplace=False)

    def forward(self, x):
        up = self.conv(torch.cat([self.branch0(x), self.branch1(x)], 1))
        return self.act(x + self.scale * up)


class Mixed7a(nn.Module):
    def __init__(self):
        super().__init__()
        self.branch0 = nn.Sequential(ConvBN(1088, 256, 1), ConvBN(256, 384, 3, stride=2, padding=1))
        self.branch1 = nn.Sequential(ConvBN(1088, 256, 1), ConvBN(256, 288, 3, stride=2, padding=1))
        self.branch2 = nn.Sequential(
            ConvBN(1088, 256, 1), ConvBN(256, 288, 3, padding=1),
            ConvBN(288, 320, 3, stride=2, padding=1),
        )
        self.branch3 = nn.MaxPool2d(3, stride=2, padding=1)

    def forward(self, x):
        return torch.cat([self.branch0(x), self.branch1(x), self.branch2(x), self.branch3(x)], 1)


class Block8(nn.Module):
    def __init__(self, scale: float = 0.20, activate: bool = True):
        super().__init__()
        self.scale = scale
        self.activate = activate
        self.branch0 = ConvBN(2080, 192, 1)
        self.branch1 = nn.Sequential(
            ConvBN(2080, 192, 1),
            ConvBN(192, 224, (1, 3), padding=(0, 1)),
            ConvBN(224, 256, (3, 1), padding=(1, 0)),
        )
        self.conv = nn.Conv2d(448, 2080, 1)
        self.act = nn.ReLU(inplace=False)

    def forward(self, x):
        up = self.conv(torch.cat([self.branch0(x), self.branch1(x)], 1))
        out = x + self.scale * up
        return self.act(out) if self.activate else out


class InceptionResNetV2(nn.Module):
    stage_channels = (64, 320, 1088, 1536)
    pooled_channels = 1536

    def __init__(self):
        super().__init__()
        self.stem_a = nn.Sequential(
            ConvBN(3, 32, 3, stride=2, padding=1),
            ConvBN(32, 32, 3, padding=1),
            ConvBN(32, 64, 3, padding=1),
        )
        self.pool_a = nn.MaxPool2d(3, stride=2, padding=1)
        self.stem_b = nn.Sequential(ConvBN(64, 80, 1), ConvBN(80, 192, 3, padding=1))
        self.pool_b = nn.MaxPool2d(3, stride=2, padding=1)
        self.mixed_5b = Mixed5b()
        self.repeat_35 = nn.Sequential(*[Block35() for _ in range(10)])
        self.mixed_6a = Mixed6a()
        self.repeat_17 = nn.Sequential(*[Block17() for _ in range(20)])
        self.mixed_7a = Mixed7a()
        self.repeat_8 = nn.Sequential(*[Block8() for _ in range(9)], Block8(scale=1.0, activate=False))
        self.conv_final = ConvBN(2080, 1536, 1)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        """Return the four stage activations, shallow to deep."""
        s4 = self.pool_a(self.stem_a(x))
        x = self.pool_b(self.stem_b(s4))
        s8 = self.repeat_35(self.mixed_5b(x))
        s16 = self.repeat_17(self.mixed_6a(s8))
        s32 = self.conv_final(self.repeat_8(self.mixed_7a(s16)))
        return [s4, s8, s16, s32]
