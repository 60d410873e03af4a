"""Attention-guided unpaired image-to-image translation."""

from .core import (
    AttentionMask,
    ContentMask,
    ContractError,
    DimensionError,
    Domain,
    GanLossForm,
    ImageBatch,
    LossReport,
    MaskPair,
    TrainConfig,
    load_config,
    save_config,
    seed_all,
)
from .discriminators import Discriminator, discriminate, discriminate_attended
from .generator import Generator, GeneratorSpec, build_generator, count_parameters, fuse, generator_forward
from .losses import (
    adversarial_loss_d,
    adversarial_loss_g,
    attention_adversarial_losses,
    cycle_loss,
    full_objective,
    pixel_loss,
    tv_loss,
)
from .pool import ImagePool, pool_query
from .trainer import TrainState, load_checkpoint, save_checkpoint, train, train_step

__version__ = "0.1.0"
