"""Shared value types, training configuration and seeding."""

from __future__ import annotations

import dataclasses
import enum
import os
import random
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import torch

RANGE_EPS = 1e-5


class DimensionError(ValueError):
    """Raised when tensor shapes violate an operation's contract."""


class ContractError(ValueError):
    """Raised when arguments violate a documented precondition."""


class ConfigError(ValueError):
    pass


class Domain(str, enum.Enum):
    X = "X"
    Y = "Y"


class GanLossForm(str, enum.Enum):
    NEG_LOG_LIKELIHOOD = "nll"
    LEAST_SQUARES = "lsgan"


def _check_range(name: str, t: torch.Tensor, lo: float, hi: float) -> None:
    if not torch.isfinite(t).all():
        raise ContractError(f"{name} contains non-finite values")
    if t.numel() and (t.min().item() < lo - RANGE_EPS or t.max().item() > hi + RANGE_EPS):
        raise ContractError(
            f"{name} values must lie in [{lo}, {hi}], got [{t.min().item():.6g}, {t.max().item():.6g}]"
        )


def check_spatial(t: torch.Tensor, multiple: int = 4) -> None:
    """Raise DimensionError unless both spatial axes are multiples of ``multiple``."""
    if t.dim() != 4:
        raise DimensionError(f"expected a 4-d (N, C, H, W) tensor, got shape {tuple(t.shape)}")
    for axis, size in (("height", t.shape[2]), ("width", t.shape[3])):
        if size % multiple:
            raise DimensionError(f"{axis} {size} is not a multiple of {multiple}")


@dataclass(frozen=True)
class ImageBatch:
    """A batch of (N, 3, H, W) images scaled to [-1, 1]."""

    data: torch.Tensor
    domain: Domain = Domain.X

    def __post_init__(self):
        d = self.data
        if d.dim() != 4 or d.shape[1] != 3:
            raise DimensionError(f"ImageBatch expects shape (N, 3, H, W), got {tuple(d.shape)}")
        check_spatial(d)
        _check_range("ImageBatch", d, -1.0, 1.0)

    @classmethod
    def from_uint8(cls, pixels, domain: Domain = Domain.X) -> "ImageBatch":
        """Build from 8-bit pixels laid out (N, H, W, 3) or (H, W, 3); p -> 2p/255 - 1."""
        arr = np.asarray(pixels)
        if arr.dtype != np.uint8:
            raise ContractError(f"expected uint8 pixels, got {arr.dtype}")
        if arr.ndim == 3:
            arr = arr[None]
        t = torch.from_numpy(arr.astype(np.float64)).permute(0, 3, 1, 2)
        return cls(((2.0 * t / 255.0) - 1.0).float(), domain)

    def __len__(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class AttentionMask:
    data: torch.Tensor

    def __post_init__(self):
        if self.data.dim() != 4 or self.data.shape[1] != 1:
            raise DimensionError(f"AttentionMask expects (N, 1, H, W), got {tuple(self.data.shape)}")
        _check_range("AttentionMask", self.data, 0.0, 1.0)


@dataclass(frozen=True)
class ContentMask:
    data: torch.Tensor

    def __post_init__(self):
        if self.data.dim() != 4 or self.data.shape[1] != 3:
            raise DimensionError(f"ContentMask expects (N, 3, H, W), got {tuple(self.data.shape)}")
        _check_range("ContentMask", self.data, -1.0, 1.0)


@dataclass(frozen=True)
class MaskPair:
    mask: torch.Tensor
    content: torch.Tensor


@dataclass
class TrainConfig:
    # loss weights
    lambda_gan: float = 0.5
    lambda_cycle: float = 10.0
    lambda_pixel: float = 1.0
    lambda_tv: float = 1e-6
    # curriculum
    r_warm: float = 0.01
    warm_epochs: int = 10
    r_main: float = 0.5
    # optimisation
    buffer_size: int = 50
    pool_swap_prob: float = 0.5
    batch_size: int = 1
    epochs: int = 200
    decay_start_epoch: int = 100
    lr: float = 1e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    per_network_optimizers: bool = False
    gan_form: str = GanLossForm.LEAST_SQUARES.value
    # architecture / data
    image_size: int = 64
    channel_scale: float = 0.5
    first_block_norm: bool = False
    flip_augment: bool = True
    seed: int = 0
    # model components (see ablation)
    attention_generator: bool = True
    attention_discriminators: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("lambda_gan", "lambda_cycle", "lambda_pixel", "lambda_tv"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("r_warm", "r_main", "pool_swap_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.warm_epochs > self.epochs:
            raise ConfigError("warm_epochs must not exceed epochs")
        if self.epochs > 0 and self.decay_start_epoch >= self.epochs:
            raise ConfigError("decay_start_epoch must be < epochs")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0.0 < self.channel_scale <= 1.0:
            raise ConfigError("channel_scale must lie in (0, 1]")
        # smaller inputs leave the discriminator's normalised blocks with 1x1 maps
        if self.image_size < 32 or self.image_size % 4:
            raise ConfigError("image_size must be >= 32 and a multiple of 4")
        if self.gan_form not in {f.value for f in GanLossForm}:
            raise ConfigError(f"unknown gan_form {self.gan_form!r}")
        if self.attention_discriminators and not self.attention_generator:
            raise ConfigError("attention discriminators need the attention generator")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def curriculum_r(self, epoch: int) -> float:
        return self.r_warm if epoch < self.warm_epochs else self.r_main

    def lr_at(self, epoch: int) -> float:
        """Constant until ``decay_start_epoch``, then linear to exactly 0 at ``epochs``."""
        if epoch < self.decay_start_epoch:
            return self.lr
        span = self.epochs - self.decay_start_epoch
        return self.lr * max(self.epochs - epoch, 0) / span

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: Mapping[str, Any]) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**values)


_TRUE = {"true", "yes", "1", "on"}
_FALSE = {"false", "no", "0", "off"}


def parse_value(name: str, raw: str, kind: type) -> Any:
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw.strip('"').strip("'")
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def field_types() -> dict[str, type]:
    hints = {"float": float, "int": int, "bool": bool, "str": str}
    return {f.name: hints[f.type] for f in fields(TrainConfig)}


def parse_config_text(text: str) -> dict[str, Any]:
    types = field_types()
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = parse_value(key, raw, types[key])
    return values


def format_config(cfg: TrainConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {repr(v) if isinstance(v, float) else str(v).lower() if isinstance(v, bool) else v}")
    return "\n".join(lines) + "\n"


def load_config(path: str | os.PathLike, **overrides) -> TrainConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    values = parse_config_text(text)
    values.update(overrides)
    return TrainConfig.from_dict(values)


def save_config(cfg: TrainConfig, path: str | os.PathLike) -> None:
    Path(path).write_text(format_config(cfg))


def seed_all(seed: int) -> None:
    """Seed python, numpy and torch global generators."""
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


@dataclass
class LossReport:
    """Scalar losses for one step. ``total`` is the generator's curriculum objective."""

    gan_xy: float = 0.0
    gan_yx: float = 0.0
    agan_xy: float = 0.0
    agan_yx: float = 0.0
    cycle: float = 0.0
    pixel: float = 0.0
    tv_x: float = 0.0
    tv_y: float = 0.0
    total: float = 0.0
    # halved discriminator objectives
    d_x: float = 0.0
    d_y: float = 0.0
    d_xa: float = 0.0
    d_ya: float = 0.0
    r: float = field(default=0.0)

    COMPONENTS = ("gan_xy", "gan_yx", "agan_xy", "agan_yx", "cycle", "pixel", "tv_x", "tv_y")

    def components(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in self.COMPONENTS}

    def as_dict(self) -> dict[str, float]:
        return dataclasses.asdict(self)

    @classmethod
    def mean(cls, reports: list["LossReport"]) -> "LossReport":
        if not reports:
            return cls()
        keys = [f.name for f in fields(cls)]
        return cls(**{k: float(np.mean([getattr(r, k) for r in reports])) for k in keys})
