"""Numpy U-Net with hand-written backprop, Adam, plateau scheduling and FSR1 checkpoints."""

from .checkpoint import (
    BadMagicError,
    CheckpointError,
    ChecksumError,
    ShapeMismatchError,
    TruncatedCheckpointError,
    VersionMismatchError,
    checkpoint_load,
    checkpoint_save,
)
from .layers import (
    ConvLayer,
    conv2d_backward,
    conv2d_forward,
    dropout_backward,
    dropout_forward,
    maxpool2_backward,
    maxpool2_forward,
    mse_loss_and_grad,
    relu_backward,
    relu_forward,
    upsample2_backward,
    upsample2_forward,
)
from .optim import AdamState, PlateauScheduler, adam_step, scheduler_step
from .unet import Tape, UNetModel, unet_backward, unet_forward

__all__ = [
    "AdamState", "BadMagicError", "CheckpointError", "ChecksumError", "ConvLayer",
    "PlateauScheduler", "ShapeMismatchError", "Tape", "TruncatedCheckpointError",
    "UNetModel", "VersionMismatchError", "adam_step", "checkpoint_load", "checkpoint_save",
    "conv2d_backward", "conv2d_forward", "dropout_backward", "dropout_forward",
    "maxpool2_backward", "maxpool2_forward", "mse_loss_and_grad", "relu_backward",
    "relu_forward", "scheduler_step", "unet_backward", "unet_forward",
    "upsample2_backward", "upsample2_forward",
]
