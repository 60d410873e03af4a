"""Attention-guided generator and the mask fusion operator.

The trunk is described by a compact layer string::

    c7s1-64, d128, d256, R256x6, u128, u64, c7s1-4

``c7s1-k`` is a 7x7 stride-1 conv, ``dk`` a 3x3 stride-2 conv, ``Rk`` a
residual block of two 3x3 convs, ``uk`` a 3x3 stride-1/2 transposed conv.
Every layer but the last is followed by BatchNorm and ReLU; the last one is
the output head.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import torch
import torch.nn as nn

from .core import DimensionError, ImageBatch, MaskPair, check_spatial

DEFAULT_LAYERS = "c7s1-64,d128,d256,R256x6,u128,u64,c7s1-4"

_TOKEN = re.compile(r"^(c7s1-|d|R|u)(\d+)(?:x(\d+))?$")


def scale_width(k: int, channel_scale: float) -> int:
    return max(4, math.floor(k * channel_scale))


@dataclass(frozen=True)
class GeneratorSpec:
    """Parsed layer list. ``layers`` holds (kind, filters) pairs, repeats expanded."""

    layers: tuple[tuple[str, int], ...]
    in_channels: int = 3

    @classmethod
    def parse(cls, text: str = DEFAULT_LAYERS, channel_scale: float = 1.0,
              out_channels: int | None = None) -> "GeneratorSpec":
        tokens = [t.strip() for t in text.replace("_", "-").split(",") if t.strip()]
        layers = []
        for i, tok in enumerate(tokens):
            m = _TOKEN.match(tok)
            if not m:
                raise ValueError(f"bad layer token {tok!r}")
            kind, k, rep = m.group(1).rstrip("-"), int(m.group(2)), int(m.group(3) or 1)
            last = i == len(tokens) - 1
            if last:
                if kind != "c7s1":
                    raise ValueError("the output layer must be c7s1-k")
                k = out_channels if out_channels is not None else k
            else:
                k = scale_width(k, channel_scale)
            layers.extend([(kind, k)] * rep)
        return cls(tuple(layers))

    @property
    def out_channels(self) -> int:
        return self.layers[-1][1]

    @property
    def n_residual(self) -> int:
        return sum(1 for kind, _ in self.layers if kind == "R")

    def feature_shapes(self, h: int, w: int) -> list[tuple[int, int, int]]:
        """(C, H, W) after each layer, derived from the conv arithmetic."""
        shapes = []
        for kind, k in self.layers:
            if kind == "d":
                h, w = (h + 2 - 3) // 2 + 1, (w + 2 - 3) // 2 + 1
            elif kind == "u":
                h, w = (h - 1) * 2 - 2 + 3 + 1, (w - 1) * 2 - 2 + 3 + 1
            shapes.append((k, h, w))
        return shapes


class ResidualBlock(nn.Module):
    def __init__(self, ch: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.ReflectionPad2d(1),
            nn.Conv2d(ch, ch, 3, bias=False),
            nn.BatchNorm2d(ch),
            nn.ReLU(inplace=True),
            nn.ReflectionPad2d(1),
            nn.Conv2d(ch, ch, 3, bias=False),
            nn.BatchNorm2d(ch),
        )

    def forward(self, x):
        return x + self.block(x)


def _build_layer(kind: str, cin: int, cout: int, head: bool) -> nn.Module:
    if head:
        return nn.Sequential(nn.ReflectionPad2d(3), nn.Conv2d(cin, cout, 7))
    if kind == "c7s1":
        conv = [nn.ReflectionPad2d(3), nn.Conv2d(cin, cout, 7, bias=False)]
    elif kind == "d":
        conv = [nn.Conv2d(cin, cout, 3, stride=2, padding=1, bias=False)]
    elif kind == "u":
        conv = [nn.ConvTranspose2d(cin, cout, 3, stride=2, padding=1, output_padding=1, bias=False)]
    elif kind == "R":
        if cin != cout:
            raise ValueError(f"residual block needs equal widths, got {cin}->{cout}")
        return ResidualBlock(cout)
    else:
        raise ValueError(kind)
    return nn.Sequential(*conv, nn.BatchNorm2d(cout), nn.ReLU(inplace=True))


def init_weights(module: nn.Module, std: float = 0.02) -> None:
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.normal_(m.weight, 0.0, std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.normal_(m.weight, 1.0, std)
            nn.init.zeros_(m.bias)


class Generator(nn.Module):
    """Maps an image to an attention mask and a content mask.

    With ``attention=False`` the head has three channels and the network
    returns the content head as the translated image (no fusion).
    """

    def __init__(self, spec: GeneratorSpec | None = None, attention: bool = True):
        super().__init__()
        if spec is None:
            spec = GeneratorSpec.parse(out_channels=4 if attention else 3)
        expected = 4 if attention else 3
        if spec.out_channels != expected:
            raise ValueError(f"head must emit {expected} channels, spec has {spec.out_channels}")
        self.spec = spec
        self.attention = attention
        layers, cin = [], spec.in_channels
        for i, (kind, k) in enumerate(spec.layers):
            layers.append(_build_layer(kind, cin, k, head=i == len(spec.layers) - 1))
            cin = k
        self.layers = nn.Sequential(*layers)
        # diagnostic hook: when set, the attention head is replaced by this constant
        self.force_mask: float | None = None
        init_weights(self)

    def heads(self, x: torch.Tensor) -> MaskPair:
        check_spatial(x)
        if x.shape[1] != self.spec.in_channels:
            raise DimensionError(f"expected {self.spec.in_channels} input channels, got {x.shape[1]}")
        out = self.layers(x)
        if not self.attention:
            return MaskPair(mask=None, content=torch.tanh(out))
        mask = torch.sigmoid(out[:, :1])
        if self.force_mask is not None:
            mask = torch.full_like(mask, self.force_mask)
        return MaskPair(mask=mask, content=torch.tanh(out[:, 1:]))

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor | None, torch.Tensor]:
        """Return ``(translated, mask, content)``; ``mask`` is None without attention."""
        pair = self.heads(x)
        if pair.mask is None:
            return pair.content, None, pair.content
        return fuse(x, pair.mask, pair.content), pair.mask, pair.content


def build_generator(channel_scale: float = 1.0, attention: bool = True,
                    layers: str = DEFAULT_LAYERS) -> Generator:
    spec = GeneratorSpec.parse(layers, channel_scale, out_channels=4 if attention else 3)
    return Generator(spec, attention=attention)


def generator_forward(x: ImageBatch | torch.Tensor, gen: Generator) -> MaskPair:
    return gen.heads(x.data if isinstance(x, ImageBatch) else x)


def fuse(x: torch.Tensor, mask: torch.Tensor, content: torch.Tensor) -> torch.Tensor:
    """content * mask + x * (1 - mask), the one-channel mask broadcast over RGB."""
    if x.shape != content.shape:
        raise DimensionError(f"image {tuple(x.shape)} and content {tuple(content.shape)} differ")
    if mask.dim() != 4 or mask.shape[1] != 1 or mask.shape[0] != x.shape[0] or mask.shape[2:] != x.shape[2:]:
        raise DimensionError(f"mask {tuple(mask.shape)} does not align with image {tuple(x.shape)}")
    return content * mask + x * (1 - mask)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters() if p.requires_grad)
