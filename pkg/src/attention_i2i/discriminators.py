"""Vanilla and attention-guided discriminators.

Both follow ``[C64, C128, C256, C512, C512]`` with 4x4 convs and LeakyReLU,
the last block at stride 1 without normalisation, then global average
pooling and a 1x1 conv down to one score per image.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .core import DimensionError
from .generator import init_weights, scale_width

DEFAULT_WIDTHS = (64, 128, 256, 512, 512)
LEAKY_SLOPE = 0.2


def feature_size(size: int, n_blocks: int = len(DEFAULT_WIDTHS)) -> int:
    """Spatial size before pooling: stride-2 blocks then one stride-1 block (k=4, p=1)."""
    for _ in range(n_blocks - 1):
        size = (size + 2 - 4) // 2 + 1
    return size + 2 - 4 + 1


class Discriminator(nn.Module):
    def __init__(self, in_channels: int = 3, channel_scale: float = 1.0,
                 first_block_norm: bool = False, widths=DEFAULT_WIDTHS):
        super().__init__()
        self.in_channels = in_channels
        widths = [scale_width(w, channel_scale) for w in widths]
        blocks, cin = [], in_channels
        for i, w in enumerate(widths):
            last = i == len(widths) - 1
            norm = not last and (i > 0 or first_block_norm)
            stride = 1 if last else 2
            layer = [nn.Conv2d(cin, w, 4, stride=stride, padding=1, bias=not norm)]
            if norm:
                layer.append(nn.BatchNorm2d(w))
            layer.append(nn.LeakyReLU(LEAKY_SLOPE, inplace=True))
            blocks.append(nn.Sequential(*layer))
            cin = w
        self.features = nn.Sequential(*blocks)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.head = nn.Conv2d(cin, 1, 1)
        init_weights(self)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4 or x.shape[1] != self.in_channels:
            raise DimensionError(
                f"discriminator expects {self.in_channels} channels, got shape {tuple(x.shape)}"
            )
        return self.head(self.pool(self.features(x))).flatten()


def discriminate(img: torch.Tensor, disc: Discriminator) -> torch.Tensor:
    return disc(img)


def discriminate_attended(mask: torch.Tensor, img: torch.Tensor, disc: Discriminator) -> torch.Tensor:
    """Score the pair ``[mask, img]`` stacked as a 4-channel input."""
    if mask.dim() != 4 or mask.shape[1] != 1 or mask.shape[0] != img.shape[0] or mask.shape[2:] != img.shape[2:]:
        raise DimensionError(f"mask {tuple(mask.shape)} does not align with image {tuple(img.shape)}")
    return disc(torch.cat([mask, img], dim=1))
