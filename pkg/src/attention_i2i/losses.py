"""Training objectives.

Scores are raw discriminator outputs (logits for the log form). L1 terms are
means over elements; the total-variation term is a plain sum.
"""

from __future__ import annotations

from typing import Any, Mapping

import torch
import torch.nn.functional as F

from .core import ContractError, DimensionError, GanLossForm, TrainConfig
from .discriminators import discriminate_attended

RECONSTRUCTION_TERMS = ("cycle", "pixel")
GAN_TERMS = ("gan_xy", "gan_yx", "agan_xy", "agan_yx")
TV_TERMS = ("tv_x", "tv_y")


def _form(form) -> GanLossForm:
    return GanLossForm(form)


def _nonempty(*scores: torch.Tensor) -> None:
    for s in scores:
        if s.numel() == 0:
            raise ContractError("adversarial loss needs a non-empty batch")


def adversarial_loss_d(real_scores: torch.Tensor, fake_scores: torch.Tensor,
                       form=GanLossForm.LEAST_SQUARES) -> torch.Tensor:
    _nonempty(real_scores, fake_scores)
    if _form(form) is GanLossForm.LEAST_SQUARES:
        return 0.5 * ((real_scores - 1) ** 2).mean() + 0.5 * (fake_scores ** 2).mean()
    # log(1 - sigmoid(s)) == logsigmoid(-s)
    return -F.logsigmoid(real_scores).mean() - F.logsigmoid(-fake_scores).mean()


def adversarial_loss_g(fake_scores: torch.Tensor, form=GanLossForm.LEAST_SQUARES) -> torch.Tensor:
    """Generator side; the log form is the non-saturating -log sigmoid(fake)."""
    _nonempty(fake_scores)
    if _form(form) is GanLossForm.LEAST_SQUARES:
        return 0.5 * ((fake_scores - 1) ** 2).mean()
    return -F.logsigmoid(fake_scores).mean()


def attention_adversarial_losses(mask, real_img, fake_img, disc,
                                 form=GanLossForm.LEAST_SQUARES,
                                 fake_mask=None) -> tuple[torch.Tensor, torch.Tensor]:
    """Losses for a discriminator that scores ``[mask, image]`` pairs.

    The real pair always carries a detached mask. ``d_loss`` sees the fake pair
    detached; ``g_loss`` keeps gradients through both fake image and mask.
    ``fake_mask`` lets the discriminator step use a pooled mask for the fake pair.
    """
    fake_mask = mask if fake_mask is None else fake_mask
    real_scores = discriminate_attended(mask.detach(), real_img, disc)
    fake_scores_d = discriminate_attended(fake_mask.detach(), fake_img.detach(), disc)
    d_loss = adversarial_loss_d(real_scores, fake_scores_d, form)
    g_loss = adversarial_loss_g(discriminate_attended(mask, fake_img, disc), form)
    return d_loss, g_loss


def _l1(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    return (a - b).abs().mean()


def cycle_loss(x, cycled_x, y, cycled_y) -> torch.Tensor:
    return _l1(cycled_x, x) + _l1(cycled_y, y)


def pixel_loss(x, gen_y_from_x, y, gen_x_from_y) -> torch.Tensor:
    """L1 between each generator's output and its own input."""
    return _l1(gen_y_from_x, x) + _l1(gen_x_from_y, y)


def tv_loss(mask: torch.Tensor) -> torch.Tensor:
    """Anisotropic total variation, summed over batch and channels.

    Accepts (H, W), (C, H, W) or (N, C, H, W); differences that would cross
    the border are dropped.
    """
    dh = (mask[..., 1:, :] - mask[..., :-1, :]).abs().sum()
    dw = (mask[..., :, 1:] - mask[..., :, :-1]).abs().sum()
    return dh + dw


def _get(components: Any, key: str):
    if isinstance(components, Mapping):
        return components.get(key, 0.0)
    return getattr(components, key)


def full_objective(components: Any, cfg: TrainConfig, r: float):
    """Curriculum-weighted total.

    r * (l_cyc*cycle + l_pix*pixel) + (1 - r) * (l_gan*sum(gan terms) + l_tv*(tv_x + tv_y)).
    Works on floats or tensors; missing mapping keys count as zero.
    """
    if not 0.0 <= r <= 1.0:
        raise ContractError(f"curriculum r must lie in [0, 1], got {r}")
    gan = sum(_get(components, k) for k in GAN_TERMS)
    tv = _get(components, "tv_x") + _get(components, "tv_y")
    recon = cfg.lambda_cycle * _get(components, "cycle") + cfg.lambda_pixel * _get(components, "pixel")
    return r * recon + (1 - r) * (cfg.lambda_gan * gan + cfg.lambda_tv * tv)


def term_contributions(components: Any, cfg: TrainConfig, r: float) -> dict[str, float]:
    """How much each component adds to ``full_objective``; sums to the total."""
    weights = {
        "cycle": r * cfg.lambda_cycle,
        "pixel": r * cfg.lambda_pixel,
        **{k: (1 - r) * cfg.lambda_gan for k in GAN_TERMS},
        **{k: (1 - r) * cfg.lambda_tv for k in TV_TERMS},
    }
    return {k: w * float(_get(components, k)) for k, w in weights.items()}
