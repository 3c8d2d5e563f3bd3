"""Checkpoint conversion into the plane-wave pipeline's weight format, plus
forward-pass parity verification against captured reference activations."""

from .checkpoint import (
    CheckpointDescription,
    CheckpointError,
    CheckpointLayer,
    load_checkpoint,
    save_checkpoint,
)
from .convert import ConversionError, TargetDescription, convert, convert_transpose_kernel
from .formats import FormatError, load_pwim, load_pwnn, pwnn_shapes, save_pwim, save_pwnn
from .parity import (
    LayerParity,
    ParityError,
    ParityReport,
    generator_layer_sequence,
    verify_parity,
    write_parity_report,
)

__version__ = "0.1.0"

__all__ = [
    "CheckpointDescription",
    "CheckpointError",
    "CheckpointLayer",
    "load_checkpoint",
    "save_checkpoint",
    "ConversionError",
    "TargetDescription",
    "convert",
    "convert_transpose_kernel",
    "FormatError",
    "load_pwim",
    "load_pwnn",
    "pwnn_shapes",
    "save_pwim",
    "save_pwnn",
    "LayerParity",
    "ParityError",
    "ParityReport",
    "generator_layer_sequence",
    "verify_parity",
    "write_parity_report",
]
