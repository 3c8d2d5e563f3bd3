"""Backprop, ADAM, loss functions and toy training harnesses."""

from .backprop import add_grads, backward_graph, forward_training
from .logs import append_log_note, read_training_log, write_training_log
from .losses import (
    LossWeights,
    cyclegan_losses,
    l1_grad,
    l1_loss,
    mse_grad,
    mse_loss,
    mse_to_const,
    mse_to_const_grad,
)
from .optim import AdamState, LrSchedule, adam_step, default_cyclegan_schedule
from .toy import (
    CycleGANConfig,
    CycleGANResult,
    Stage1Config,
    Stage1Result,
    make_paired_toy_dataset,
    make_unpaired_toy_domains,
    train_cyclegan_toy,
    train_stage1_toy,
    validation_l1,
)

__all__ = [
    "add_grads",
    "backward_graph",
    "forward_training",
    "append_log_note",
    "read_training_log",
    "write_training_log",
    "LossWeights",
    "cyclegan_losses",
    "l1_grad",
    "l1_loss",
    "mse_grad",
    "mse_loss",
    "mse_to_const",
    "mse_to_const_grad",
    "AdamState",
    "LrSchedule",
    "adam_step",
    "default_cyclegan_schedule",
    "CycleGANConfig",
    "CycleGANResult",
    "Stage1Config",
    "Stage1Result",
    "make_paired_toy_dataset",
    "make_unpaired_toy_domains",
    "train_cyclegan_toy",
    "train_stage1_toy",
    "validation_l1",
]
