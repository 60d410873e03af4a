"""Unpaired image folders and a synthetic two-domain toy task.

Layout::

    root/trainA/*.png   root/trainB/*.png   root/testA/*.png   root/testB/*.png

The synthetic generator also writes ``root/<split><domain>_gt/<name>.png``,
a binary mask of the region that differs between the two domains.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

SPLITS = ("train", "test")
DOMAINS = ("A", "B")
IMAGE_EXTS = {".png", ".jpg", ".jpeg"}


class DatasetError(RuntimeError):
    pass


def to_tensor(pixels: np.ndarray) -> torch.Tensor:
    """(H, W, 3) uint8 -> (3, H, W) float32 in [-1, 1]."""
    return torch.from_numpy(pixels.astype(np.float32) * (2.0 / 255.0) - 1.0).permute(2, 0, 1).contiguous()


def to_uint8(t: torch.Tensor) -> np.ndarray:
    """(3, H, W) or (1, H, W) in [-1, 1] -> (H, W, C) uint8, rounding half away from zero."""
    v = (t.detach().cpu().double().clamp(-1, 1) + 1.0) * 127.5
    return torch.floor(v + 0.5).to(torch.uint8).permute(1, 2, 0).numpy()


def mask_to_uint8(mask: torch.Tensor) -> np.ndarray:
    """(1, H, W) in [0, 1] -> (H, W) uint8 by a linear [0, 1] -> [0, 255] map."""
    v = mask.detach().cpu().double().clamp(0, 1)[0] * 255.0
    return torch.floor(v + 0.5).to(torch.uint8).numpy()


@dataclass
class UnpairedDataset:
    root: Path
    split: str
    domain: str
    paths: list[Path]
    images: torch.Tensor
    image_size: int

    def __len__(self) -> int:
        return len(self.paths)

    def gt_masks(self) -> torch.Tensor | None:
        """Sidecar ground-truth masks (N, 1, H, W) in {0, 1}, if present."""
        gt_dir = self.root / f"{self.split}{self.domain}_gt"
        if not gt_dir.is_dir():
            return None
        out = []
        for p in self.paths:
            m = Image.open(gt_dir / f"{p.stem}.png").convert("L")
            if m.size != (self.image_size, self.image_size):
                m = m.resize((self.image_size, self.image_size), Image.NEAREST)
            out.append(torch.from_numpy(np.asarray(m) > 127)[None])
        return torch.stack(out).float()


def _read_image(path: Path, size: int) -> np.ndarray:
    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            if im.size != (size, size):
                im = im.resize((size, size), Image.BILINEAR)
            return np.asarray(im, dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as e:
        raise DatasetError(f"cannot decode image {path}: {e}") from e


def list_images(directory: Path) -> list[Path]:
    return sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_EXTS)


def load_dataset(root: str | os.PathLike, split: str, domain: str, image_size: int = 64) -> UnpairedDataset:
    if split not in SPLITS or domain not in DOMAINS:
        raise ValueError(f"split must be one of {SPLITS} and domain one of {DOMAINS}")
    root = Path(root)
    directory = root / f"{split}{domain}"
    if not directory.is_dir():
        raise DatasetError(
            f"missing directory {directory}; expected layout root/{{trainA,trainB,testA,testB}}"
        )
    paths = list_images(directory)
    if not paths:
        raise DatasetError(f"empty domain: no images in {directory}")
    images = torch.stack([to_tensor(_read_image(p, image_size)) for p in paths])
    return UnpairedDataset(root, split, domain, paths, images, image_size)


def load_folder(directory: str | os.PathLike, image_size: int) -> tuple[list[Path], torch.Tensor]:
    directory = Path(directory)
    if not directory.is_dir():
        raise DatasetError(f"missing directory {directory}")
    paths = list_images(directory)
    if not paths:
        raise DatasetError(f"no images in {directory}")
    return paths, torch.stack([to_tensor(_read_image(p, image_size)) for p in paths])


# synthetic task

def _background(rng: np.random.Generator, size: int) -> np.ndarray:
    coarse = rng.uniform(50, 200, size=(6, 6, 3)).astype(np.uint8)
    smooth = np.asarray(Image.fromarray(coarse).resize((size, size), Image.BILINEAR), dtype=np.float64)
    return smooth + rng.normal(0, 6, size=(size, size, 3))


def render_face(rng: np.random.Generator, size: int, smile: bool) -> tuple[np.ndarray, np.ndarray]:
    """One toy image and its changed-region mask.

    A gray disc carries a dark horizontal bar (neutral) or a bright arc whose
    ends curve upward (smile). The mask is the mouth bounding box, identical
    for both variants of a given disc geometry.
    """
    img = _background(rng, size)
    radius = rng.uniform(0.22, 0.32) * size
    cx = rng.uniform(radius + 1, size - radius - 1)
    cy = rng.uniform(radius + 1, size - radius - 1)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    disc = (xx - cx) ** 2 + (yy - cy) ** 2 <= radius ** 2
    img[disc] = 150.0

    half_w = 0.5 * radius
    my = cy + 0.4 * radius
    thick = max(1.0, 0.12 * radius)
    u = (xx - cx) / half_w
    within = np.abs(u) <= 1.0
    if smile:
        curve = my + 0.2 * radius * (1.0 - 2.0 * u ** 2)
        mouth = within & (np.abs(yy - curve) <= thick)
        img[mouth] = 245.0
    else:
        mouth = within & (np.abs(yy - my) <= thick)
        img[mouth] = 30.0

    box = (np.abs(xx - cx) <= half_w + thick) & (np.abs(yy - my) <= 0.2 * radius + 2 * thick)
    pixels = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return pixels, box.astype(np.uint8) * 255


def synth_domains(out_root: str | os.PathLike, n_per_domain: int, image_size: int = 64,
                  seed: int = 0) -> Path:
    """Write train/test splits of the toy neutral (A) / smile (B) task."""
    if n_per_domain < 1:
        raise ValueError("n_per_domain must be >= 1")
    root = Path(out_root)
    for si, split in enumerate(SPLITS):
        for di, domain in enumerate(DOMAINS):
            rng = np.random.default_rng([seed, si, di])
            img_dir = root / f"{split}{domain}"
            gt_dir = root / f"{split}{domain}_gt"
            try:
                img_dir.mkdir(parents=True, exist_ok=True)
                gt_dir.mkdir(parents=True, exist_ok=True)
                for i in range(n_per_domain):
                    pixels, gt = render_face(rng, image_size, smile=domain == "B")
                    Image.fromarray(pixels).save(img_dir / f"{i:05d}.png")
                    Image.fromarray(gt).save(gt_dir / f"{i:05d}.png")
            except OSError as e:
                raise OSError(f"cannot write synthetic data under {root}: {e}") from e
    return root
