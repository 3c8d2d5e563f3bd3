"""Checkpoint-to-weight-file conversion.

The consuming engine accepts two transposed-convolution weight layouts that
describe the same operator; a kernel moves between them by flipping both
spatial axes and swapping the channel axes.  That transform is its own
inverse, so a round trip recovers the original kernel exactly.  All other
tensors pass through untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .checkpoint import SEMANTICS, CheckpointDescription
from .formats import pwnn_shapes, save_pwnn


class ConversionError(ValueError):
    """Checkpoint and target graph cannot be reconciled."""


def convert_transpose_kernel(w: np.ndarray) -> np.ndarray:
    """Map a rank-4 transposed-conv kernel between the two weight layouts."""
    w = np.asarray(w)
    if w.ndim != 4:
        raise ConversionError(f"transposed-conv kernel must be rank 4, got shape {w.shape}")
    return np.ascontiguousarray(w[::-1, ::-1].swapaxes(2, 3))


@dataclass
class TargetDescription:
    """What the destination weight file must contain.

    ``tensor_shapes`` maps fully qualified tensor names ("layer.leaf") to
    shapes; ``semantics`` is the transposed-conv layout the consumer runs
    with.  Built most conveniently from any weight file the consumer has
    already produced for the same architecture.
    """

    tensor_shapes: dict
    semantics: str = "pad_input"

    def __post_init__(self):
        if self.semantics not in SEMANTICS:
            raise ConversionError(
                f"target semantics must be one of {SEMANTICS}, got {self.semantics!r}"
            )

    @classmethod
    def from_weight_file(cls, path, semantics: str = "pad_input") -> "TargetDescription":
        return cls(tensor_shapes=pwnn_shapes(path), semantics=semantics)


def convert(checkpoint: CheckpointDescription, target: TargetDescription, out_path) -> str:
    """Write the checkpoint as a weight file for ``target``.

    Transposed-conv kernels are re-laid-out when the source and target
    semantics differ; every other tensor is copied verbatim.  The layer
    lists must align one-to-one: a checkpoint tensor without a target slot,
    or a target slot left unfilled, is an error naming both sides.
    """
    flip = checkpoint.transpose_semantics != target.semantics
    out: dict[str, np.ndarray] = {}
    for layer, leaf, arr in checkpoint.tensor_items():
        key = f"{layer.target}.{leaf}"
        if key not in target.tensor_shapes:
            raise ConversionError(
                f"checkpoint layer {layer.name!r} maps tensor {leaf!r} to {key!r}, "
                f"which the target graph does not define"
            )
        if flip and layer.kind == "conv2d_transpose" and leaf == "w":
            arr = convert_transpose_kernel(arr)
        expected = tuple(target.tensor_shapes[key])
        if tuple(arr.shape) != expected:
            raise ConversionError(
                f"shape mismatch for {key!r}: checkpoint layer {layer.name!r} supplies "
                f"{tuple(arr.shape)}, target expects {expected}"
            )
        out[key] = np.asarray(arr, dtype=np.float32)
    missing = sorted(set(target.tensor_shapes) - set(out))
    if missing:
        raise ConversionError(
            f"target tensors not supplied by any checkpoint layer: {', '.join(missing)}"
        )
    save_pwnn(out, out_path)
    return str(out_path)
