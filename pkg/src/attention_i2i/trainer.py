"""Alternating generator/discriminator optimisation with curriculum weighting."""

from __future__ import annotations

import hashlib
import itertools
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import torch
import torch.nn as nn

from .core import GanLossForm, LossReport, TrainConfig, seed_all
from .discriminators import Discriminator, discriminate_attended
from .generator import Generator, build_generator
from .losses import (
    adversarial_loss_d,
    adversarial_loss_g,
    cycle_loss,
    full_objective,
    pixel_loss,
    tv_loss,
)
from .pool import ImagePool

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 1
NETWORKS = ("g_xy", "g_yx", "d_x", "d_y", "d_xa", "d_ya")


class TrainingError(RuntimeError):
    pass


class CheckpointError(RuntimeError):
    pass


def build_networks(cfg: TrainConfig) -> dict[str, nn.Module]:
    nets: dict[str, nn.Module] = {
        "g_xy": build_generator(cfg.channel_scale, attention=cfg.attention_generator),
        "g_yx": build_generator(cfg.channel_scale, attention=cfg.attention_generator),
        "d_x": Discriminator(3, cfg.channel_scale, cfg.first_block_norm),
        "d_y": Discriminator(3, cfg.channel_scale, cfg.first_block_norm),
    }
    if cfg.attention_discriminators:
        nets["d_xa"] = Discriminator(4, cfg.channel_scale, cfg.first_block_norm)
        nets["d_ya"] = Discriminator(4, cfg.channel_scale, cfg.first_block_norm)
    return nets


def _adam(params: Iterable, cfg: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(params, lr=cfg.lr, betas=(cfg.adam_beta1, cfg.adam_beta2))


class TrainState:
    """Networks, optimisers, pools and counters owned by one training run."""

    def __init__(self, cfg: TrainConfig):
        seed_all(cfg.seed)
        self.cfg = cfg
        self.nets = build_networks(cfg)
        self.generators = [self.nets["g_xy"], self.nets["g_yx"]]
        self.discriminators = [n for k, n in self.nets.items() if k.startswith("d_")]
        if cfg.per_network_optimizers:
            self.opt_g = {k: _adam(self.nets[k].parameters(), cfg) for k in ("g_xy", "g_yx")}
            self.opt_d = {k: _adam(n.parameters(), cfg) for k, n in self.nets.items() if k.startswith("d_")}
        else:
            self.opt_g = {"g": _adam(itertools.chain(*(g.parameters() for g in self.generators)), cfg)}
            self.opt_d = {"d": _adam(itertools.chain(*(d.parameters() for d in self.discriminators)), cfg)}
        self.pool_x = ImagePool(cfg.buffer_size, cfg.pool_swap_prob, seed=cfg.seed * 2 + 1)
        self.pool_y = ImagePool(cfg.buffer_size, cfg.pool_swap_prob, seed=cfg.seed * 2 + 2)
        self.epoch = 0
        self.epoch_step = 0
        self.step = 0
        for net in self.nets.values():
            net.train()

    def __getattr__(self, name):
        nets = self.__dict__.get("nets", {})
        if name in NETWORKS:
            return nets.get(name)
        raise AttributeError(name)

    @property
    def r(self) -> float:
        return self.cfg.curriculum_r(self.epoch)

    @property
    def lr(self) -> float:
        return self.cfg.lr_at(self.epoch)

    def optimizers(self) -> list[torch.optim.Optimizer]:
        return [*self.opt_g.values(), *self.opt_d.values()]

    def apply_lr(self) -> None:
        lr = self.lr
        for opt in self.optimizers():
            for group in opt.param_groups:
                group["lr"] = lr

    def state_dict(self, include_pool: bool = True) -> dict:
        return {
            "format_version": CHECKPOINT_FORMAT,
            "groups": {k: n.state_dict() for k, n in self.nets.items()},
            "optimizers": {
                "g": {k: o.state_dict() for k, o in self.opt_g.items()},
                "d": {k: o.state_dict() for k, o in self.opt_d.items()},
            },
            "epoch": self.epoch,
            "epoch_step": self.epoch_step,
            "step": self.step,
            "config": self.cfg.to_dict(),
            "pools": {"x": self.pool_x.state_dict(), "y": self.pool_y.state_dict()} if include_pool else None,
            "metadata": {"pool": "included" if include_pool else "excluded"},
        }

    def load_state_dict(self, state: dict) -> None:
        if state.get("format_version") != CHECKPOINT_FORMAT:
            raise CheckpointError(f"unsupported checkpoint format {state.get('format_version')!r}")
        diff = shape_diff(self, state["groups"])
        if diff:
            raise CheckpointError("checkpoint does not match the architecture:\n  " + "\n  ".join(diff))
        for k, net in self.nets.items():
            net.load_state_dict(state["groups"][k])
        for k, o in self.opt_g.items():
            o.load_state_dict(state["optimizers"]["g"][k])
        for k, o in self.opt_d.items():
            o.load_state_dict(state["optimizers"]["d"][k])
        self.epoch = state["epoch"]
        self.epoch_step = state["epoch_step"]
        self.step = state["step"]
        if state.get("pools"):
            self.pool_x.load_state_dict(state["pools"]["x"])
            self.pool_y.load_state_dict(state["pools"]["y"])


def shape_diff(state: TrainState, groups: dict) -> list[str]:
    """Human-readable differences between the live networks and saved tensors."""
    out = []
    for name in sorted(set(state.nets) | set(groups)):
        if name not in groups:
            out.append(f"{name}: missing from checkpoint")
            continue
        if name not in state.nets:
            out.append(f"{name}: unexpected group in checkpoint")
            continue
        live = state.nets[name].state_dict()
        saved = groups[name]
        for key in sorted(set(live) | set(saved)):
            a, b = live.get(key), saved.get(key)
            if a is None:
                out.append(f"{name}.{key}: unexpected tensor {tuple(b.shape)}")
            elif b is None:
                out.append(f"{name}.{key}: missing (expected {tuple(a.shape)})")
            elif a.shape != b.shape:
                out.append(f"{name}.{key}: expected {tuple(a.shape)}, got {tuple(b.shape)}")
    return out


def save_checkpoint(state: TrainState, path: str | os.PathLike, include_pool: bool = True) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(state.state_dict(include_pool), path)
    except OSError as e:
        raise OSError(f"cannot write checkpoint {path}: {e}") from e
    return path


def load_checkpoint(path: str | os.PathLike, cfg: TrainConfig | None = None) -> TrainState:
    path = Path(path)
    try:
        raw = torch.load(path, map_location="cpu", weights_only=True)
    except (OSError, RuntimeError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    cfg = cfg or TrainConfig.from_dict(raw["config"])
    state = TrainState(cfg)
    state.load_state_dict(raw)
    return state


def param_digest(modules: Iterable[nn.Module]) -> str:
    h = hashlib.sha256()
    for m in modules:
        for t in itertools.chain(m.parameters(), m.buffers()):
            h.update(t.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def _finite(named: dict[str, torch.Tensor]) -> None:
    for k, v in named.items():
        if isinstance(v, torch.Tensor) and not torch.isfinite(v).all():
            raise TrainingError(f"non-finite loss term {k!r}: {v.item()}")


def _set_requires_grad(nets: Iterable[nn.Module], flag: bool) -> None:
    for n in nets:
        n.requires_grad_(flag)


def _scalar(v) -> float:
    return float(v.detach()) if isinstance(v, torch.Tensor) else float(v)


def train_step(state: TrainState, x: torch.Tensor, y: torch.Tensor,
               cfg: TrainConfig | None = None) -> tuple[TrainState, LossReport]:
    """One generator update followed by one discriminator update."""
    cfg = cfg or state.cfg
    if x.shape != y.shape:
        raise ValueError(f"x {tuple(x.shape)} and y {tuple(y.shape)} batches must match")
    form = GanLossForm(cfg.gan_form)
    r = cfg.curriculum_r(state.epoch)
    g_xy, g_yx, d_x, d_y = state.g_xy, state.g_yx, state.d_x, state.d_y
    attend = cfg.attention_discriminators
    state.apply_lr()

    # generator step
    _set_requires_grad(state.discriminators, False)
    fake_y, m_y, _ = g_xy(x)
    fake_x, m_x, _ = g_yx(y)
    rec_x, _, _ = g_yx(fake_y)
    rec_y, _, _ = g_xy(fake_x)
    terms: dict[str, torch.Tensor | float] = {
        "gan_xy": adversarial_loss_g(d_y(fake_y), form),
        "gan_yx": adversarial_loss_g(d_x(fake_x), form),
        "agan_xy": 0.0,
        "agan_yx": 0.0,
        "cycle": cycle_loss(x, rec_x, y, rec_y),
        "pixel": pixel_loss(x, fake_y, y, fake_x),
        "tv_x": tv_loss(m_x) if m_x is not None else 0.0,
        "tv_y": tv_loss(m_y) if m_y is not None else 0.0,
    }
    if attend:
        terms["agan_xy"] = adversarial_loss_g(discriminate_attended(m_y, fake_y, state.d_ya), form)
        terms["agan_yx"] = adversarial_loss_g(discriminate_attended(m_x, fake_x, state.d_xa), form)
    total = full_objective(terms, cfg, r)
    _finite({**terms, "total": total})
    for opt in state.opt_g.values():
        opt.zero_grad(set_to_none=True)
    total.backward()
    for opt in state.opt_g.values():
        opt.step()
    _set_requires_grad(state.discriminators, True)

    # discriminator step on pooled, detached fakes
    if m_y is not None:
        pooled_y, pooled_my = state.pool_y.query(fake_y.detach(), m_y.detach())
        pooled_x, pooled_mx = state.pool_x.query(fake_x.detach(), m_x.detach())
    else:
        (pooled_y,), (pooled_x,) = state.pool_y.query(fake_y.detach()), state.pool_x.query(fake_x.detach())
    d_terms = {
        "d_y": 0.5 * adversarial_loss_d(d_y(y), d_y(pooled_y), form),
        "d_x": 0.5 * adversarial_loss_d(d_x(x), d_x(pooled_x), form),
        "d_ya": 0.0,
        "d_xa": 0.0,
    }
    if attend:
        d_ya, d_xa = state.d_ya, state.d_xa
        d_terms["d_ya"] = 0.5 * adversarial_loss_d(
            discriminate_attended(m_y.detach(), y, d_ya),
            discriminate_attended(pooled_my, pooled_y, d_ya), form)
        d_terms["d_xa"] = 0.5 * adversarial_loss_d(
            discriminate_attended(m_x.detach(), x, d_xa),
            discriminate_attended(pooled_mx, pooled_x, d_xa), form)
    _finite(d_terms)
    # discriminators ascend the same curriculum objective, so share its weight
    d_total = (1 - r) * cfg.lambda_gan * sum(d_terms.values())
    for opt in state.opt_d.values():
        opt.zero_grad(set_to_none=True)
    d_total.backward()
    for opt in state.opt_d.values():
        opt.step()

    report = LossReport(
        **{k: _scalar(v) for k, v in terms.items()},
        total=_scalar(total),
        **{k: _scalar(v) for k, v in d_terms.items()},
        r=r,
    )
    return state, report


@dataclass
class TrainResult:
    state: TrainState
    steps: list[LossReport] = field(default_factory=list)
    epochs: list[LossReport] = field(default_factory=list)


def epoch_plan(seed: int, epoch: int, n_x: int, n_y: int, n_steps: int, batch_size: int,
               flip: bool) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
    """Index and flip schedule for one epoch, a pure function of (seed, epoch)."""
    g = torch.Generator().manual_seed(seed * 100_003 + epoch)
    total = n_steps * batch_size
    idx_x = torch.randperm(n_x, generator=g).repeat(math.ceil(total / n_x))[:total]
    idx_y = torch.randperm(n_y, generator=g).repeat(math.ceil(total / n_y))[:total]
    if flip:
        flip_x = torch.rand(total, generator=g) < 0.5
        flip_y = torch.rand(total, generator=g) < 0.5
    else:
        flip_x = flip_y = torch.zeros(total, dtype=torch.bool)
    return idx_x, idx_y, flip_x, flip_y


def _batch(images: torch.Tensor, idx: torch.Tensor, flips: torch.Tensor) -> torch.Tensor:
    b = images[idx].clone()
    if flips.any():
        b[flips] = b[flips].flip(-1)
    return b


def _images(ds) -> torch.Tensor:
    return ds.images if hasattr(ds, "images") else ds


def train(dataset_x, dataset_y, cfg: TrainConfig, state: TrainState | None = None,
          checkpoint_dir: str | os.PathLike | None = None, max_steps: int | None = None,
          on_step: Callable[[TrainState, LossReport], None] | None = None) -> TrainResult:
    """Run (or resume) training until ``cfg.epochs`` or ``max_steps`` new steps.

    An epoch is one pass over the larger domain; the smaller one cycles.
    A checkpoint is written to ``checkpoint_dir`` after every finished epoch.
    """
    xs, ys = _images(dataset_x), _images(dataset_y)
    if len(xs) == 0 or len(ys) == 0:
        raise ValueError("both domains need at least one image")
    state = state or TrainState(cfg)
    result = TrainResult(state)
    steps_per_epoch = math.ceil(max(len(xs), len(ys)) / cfg.batch_size)
    bs = cfg.batch_size
    while state.epoch < cfg.epochs:
        idx_x, idx_y, fx, fy = epoch_plan(cfg.seed, state.epoch, len(xs), len(ys),
                                          steps_per_epoch, bs, cfg.flip_augment)
        epoch_reports = []
        for s in range(state.epoch_step, steps_per_epoch):
            if max_steps is not None and len(result.steps) >= max_steps:
                return result
            sl = slice(s * bs, (s + 1) * bs)
            x = _batch(xs, idx_x[sl], fx[sl])
            y = _batch(ys, idx_y[sl], fy[sl])
            _, report = train_step(state, x, y, cfg)
            state.epoch_step = s + 1
            state.step += 1
            result.steps.append(report)
            epoch_reports.append(report)
            if on_step:
                on_step(state, report)
        mean = LossReport.mean(epoch_reports)
        result.epochs.append(mean)
        log.info("epoch %d: cycle %.4f pixel %.4f gan %.4f total %.4f", state.epoch, mean.cycle,
                 mean.pixel, mean.gan_xy + mean.gan_yx, mean.total)
        state.epoch += 1
        state.epoch_step = 0
        if checkpoint_dir is not None:
            save_checkpoint(state, Path(checkpoint_dir) / f"epoch_{state.epoch:04d}.pt")
    return result
