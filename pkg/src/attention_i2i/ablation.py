"""Component ablations: attention discriminators (AD), attention generator (AG),
pixel loss (PL) and attention/TV loss (AL).

Variant names mirror the ablation table rows::

    full        every component
    -ad         no attention-guided discriminators
    -ad-ag      also no attention generator: 3-channel head, no fusion, no masks
                (so the TV term vanishes with the masks)
    -ad-pl      no attention discriminators, no pixel loss
    -ad-al      no attention discriminators, no TV attention loss
    -ad-pl-al   neither attention discriminators nor pixel/TV losses
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import ContractError, TrainConfig


@dataclass(frozen=True)
class AblationFlags:
    use_attention_discriminators: bool = True
    use_attention_generator: bool = True
    use_pixel_loss: bool = True
    use_attention_loss: bool = True

    def validate(self) -> None:
        if self.use_attention_discriminators and not self.use_attention_generator:
            raise ContractError("attention discriminators cannot be kept without the attention generator")


VARIANTS: dict[str, AblationFlags] = {
    "full": AblationFlags(),
    "-ad": AblationFlags(use_attention_discriminators=False),
    "-ad-ag": AblationFlags(use_attention_discriminators=False, use_attention_generator=False),
    "-ad-pl": AblationFlags(use_attention_discriminators=False, use_pixel_loss=False),
    "-ad-al": AblationFlags(use_attention_discriminators=False, use_attention_loss=False),
    "-ad-pl-al": AblationFlags(use_attention_discriminators=False, use_pixel_loss=False,
                               use_attention_loss=False),
}


def variant_flags(name: str) -> AblationFlags:
    key = name.strip().lower().replace(" ", "")
    if key.startswith("full-"):
        key = key[len("full"):]
    if key and key != "full" and not key.startswith("-"):
        key = "-" + key
    if key not in VARIANTS:
        raise ContractError(f"unknown variant {name!r}; choose from {', '.join(VARIANTS)}")
    return VARIANTS[key]


def apply_ablation(cfg: TrainConfig, flags: AblationFlags) -> TrainConfig:
    flags.validate()
    changes = {
        "attention_discriminators": cfg.attention_discriminators and flags.use_attention_discriminators,
        "attention_generator": cfg.attention_generator and flags.use_attention_generator,
    }
    if not flags.use_pixel_loss:
        changes["lambda_pixel"] = 0.0
    if not flags.use_attention_loss:
        changes["lambda_tv"] = 0.0
    return cfg.replace(**changes)


def removed_terms(flags: AblationFlags) -> set[str]:
    """LossReport components that must contribute nothing under ``flags``."""
    out = set()
    if not flags.use_attention_discriminators:
        out |= {"agan_xy", "agan_yx"}
    if not flags.use_attention_generator:
        out |= {"tv_x", "tv_y"}
    if not flags.use_pixel_loss:
        out.add("pixel")
    if not flags.use_attention_loss:
        out |= {"tv_x", "tv_y"}
    return out
