"""From-scratch NHWC tensor engine, model graphs and weight files."""

from .graph import (
    LAYER_KINDS,
    ROLES,
    LayerSpec,
    ModelConfig,
    ModelGraph,
    build_discriminator,
    build_generator,
    forward,
)
from .ops import (
    batch_norm_inference,
    conv2d,
    conv2d_backward,
    conv2d_transpose,
    conv2d_transpose_backward,
    convert_transpose_weights,
    instance_norm,
    instance_norm_backward,
    leaky_relu,
    power_iteration,
    sigmoid,
    spectral_normalize,
    tanh,
    weight_matrix,
)
from .weights import load_weights, save_weights

__all__ = [
    "LAYER_KINDS",
    "ROLES",
    "LayerSpec",
    "ModelConfig",
    "ModelGraph",
    "build_discriminator",
    "build_generator",
    "forward",
    "batch_norm_inference",
    "conv2d",
    "conv2d_backward",
    "conv2d_transpose",
    "conv2d_transpose_backward",
    "convert_transpose_weights",
    "instance_norm",
    "instance_norm_backward",
    "leaky_relu",
    "power_iteration",
    "sigmoid",
    "spectral_normalize",
    "tanh",
    "weight_matrix",
    "load_weights",
    "save_weights",
]
