"""MSE / PSNR in 8-bit units, translation reports and visual grids."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from PIL import Image

from .data import mask_to_uint8, to_uint8
from .generator import Generator

PEAK = 255.0
SATURATED = math.inf


def mse(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def psnr_from_mse(value: float) -> float:
    if value == 0:
        return SATURATED
    return 10.0 * math.log10(PEAK ** 2 / value)


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR in dB with peak 255; ``SATURATED`` (inf) for identical images."""
    return psnr_from_mse(mse(a, b))


@dataclass
class MetricReport:
    mse: float
    psnr_mean: float          # mean of per-image PSNR
    psnr_of_mean_mse: float   # PSNR of the mean MSE
    n_images: int
    mode: str                 # "reference" or "input"
    per_image: list[tuple[str, float, float]] = field(default_factory=list)

    @property
    def psnr(self) -> float:
        return self.psnr_mean

    @property
    def saturated(self) -> bool:
        return self.mse == 0

    def table(self) -> str:
        lines = [
            f"mode: generated vs {self.mode}",
            f"images: {self.n_images}",
            f"MSE (mean of per-image): {self.mse:.4f}",
            f"PSNR (mean of per-image): {_fmt(self.psnr_mean)}",
            f"PSNR (of mean MSE): {_fmt(self.psnr_of_mean_mse)}",
            "",
            f"{'name':<24}{'mse':>12}{'psnr':>12}",
        ]
        lines += [f"{n:<24}{m:>12.4f}{_fmt(p):>12}" for n, m, p in self.per_image]
        return "\n".join(lines) + "\n"

    def write(self, out_dir: str | os.PathLike) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        records = out / "metrics.jsonl"
        with records.open("w") as fh:
            for n, m, p in self.per_image:
                fh.write(json.dumps({"name": n, "mse": m, "psnr": None if math.isinf(p) else p}) + "\n")
        summary = out / "metrics.txt"
        summary.write_text(self.table())
        return records, summary


def _fmt(v: float) -> str:
    return "saturated" if math.isinf(v) else f"{v:.4f}"


def aggregate(per_image: Sequence[tuple[str, float, float]], mode: str) -> MetricReport:
    if not per_image:
        raise ValueError("cannot aggregate an empty test set")
    mses = [m for _, m, _ in per_image]
    psnrs = [p for _, _, p in per_image]
    mean_mse = float(np.mean(mses))
    return MetricReport(
        mse=mean_mse,
        psnr_mean=float(np.mean(psnrs)),
        psnr_of_mean_mse=psnr_from_mse(mean_mse),
        n_images=len(per_image),
        mode=mode,
        per_image=list(per_image),
    )


@torch.no_grad()
def translate(model: Generator, images: torch.Tensor, batch_size: int = 8):
    """Run the generator in evaluation mode; returns (outputs, masks, contents)."""
    was_training = model.training
    model.eval()
    outs, masks, contents = [], [], []
    try:
        for i in range(0, len(images), batch_size):
            o, m, c = model(images[i:i + batch_size])
            outs.append(o)
            contents.append(c)
            masks.append(m if m is not None else torch.zeros_like(o[:, :1]))
    finally:
        model.train(was_training)
    return torch.cat(outs), torch.cat(masks), torch.cat(contents)


def evaluate_translation(model: Generator, test_x: torch.Tensor, test_y_ref: torch.Tensor | None = None,
                         names: Sequence[str] | None = None) -> MetricReport:
    """Compare generated images with references, or with the inputs when unpaired."""
    if len(test_x) == 0:
        raise ValueError("empty test set")
    if test_y_ref is not None and test_y_ref.shape != test_x.shape:
        raise ValueError("reference set must match the test inputs")
    names = list(names) if names is not None else [f"{i:05d}" for i in range(len(test_x))]
    fake, _, _ = translate(model, test_x)
    ref = test_y_ref if test_y_ref is not None else test_x
    rows = []
    for name, f, r in zip(names, fake, ref):
        m = mse(to_uint8(f), to_uint8(r))
        rows.append((name, m, psnr_from_mse(m)))
    return aggregate(rows, "reference" if test_y_ref is not None else "input")


def mask_localization(model: Generator, images: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """Per-image (mean mask inside gt region, mean mask outside), shape (N, 2)."""
    _, masks, _ = translate(model, images)
    inside = (masks * gt).sum((1, 2, 3)) / gt.sum((1, 2, 3)).clamp_min(1)
    outside = (masks * (1 - gt)).sum((1, 2, 3)) / (1 - gt).sum((1, 2, 3)).clamp_min(1)
    return torch.stack([inside, outside], 1)


def _panel(t: torch.Tensor) -> np.ndarray:
    return to_uint8(t)


def emit_grids(model: Generator, batch: torch.Tensor, out_dir: str | os.PathLike,
               reverse: Generator | None = None, start_index: int = 0) -> list[Path]:
    """Write one PNG per image: input | mask | content | output [| cycle]."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create grid directory {out}: {e}") from e
    fake, masks, contents = translate(model, batch)
    cycled = translate(reverse, fake)[0] if reverse is not None else None
    paths = []
    for i in range(len(batch)):
        mask = np.repeat(mask_to_uint8(masks[i])[..., None], 3, axis=2)
        panels = [_panel(batch[i]), mask, _panel(contents[i]), _panel(fake[i])]
        if cycled is not None:
            panels.append(_panel(cycled[i]))
        path = out / f"grid_{start_index + i:05}.png"
        try:
            Image.fromarray(np.concatenate(panels, axis=1)).save(path)
        except OSError as e:
            raise OSError(f"cannot write grid {path}: {e}") from e
        paths.append(path)
    return paths
