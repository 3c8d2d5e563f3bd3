"""Model graphs: layer specs, the encoder/decoder generator and the patch
discriminator, weight initialization and forward inference.

Graphs are a flat ordered layer list; skip connections are expressed by
concat layers that name an earlier layer.  Weights live in a plain dict of
name -> array so the file format and the optimizer can stay structure-free.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import ops

ROLES = ("generator_G", "generator_F", "discriminator_X", "discriminator_Y", "stage1_unet")

LAYER_KINDS = (
    "conv2d",
    "conv2d_transpose",
    "leaky_relu",
    "batch_norm",
    "instance_norm",
    "concat_skip",
    "tanh",
    "sigmoid",
)


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str
    kernel: tuple[int, int] = (3, 3)
    stride: int = 1
    filters: int = 0
    padding: str = "same"
    semantics: str = "pad_input"
    alpha: float = 0.2
    spectral_norm: bool = False
    skip_from: str | None = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind in ("conv2d", "conv2d_transpose"):
            if self.kernel[0] < 1 or self.kernel[1] < 1 or self.stride < 1:
                raise ValueError(f"layer {self.name}: kernel and stride must be positive")
            if self.filters < 1:
                raise ValueError(f"layer {self.name}: filters must be >= 1")
        if self.kind == "concat_skip" and not self.skip_from:
            raise ValueError(f"layer {self.name}: concat_skip requires skip_from")


@dataclass
class ModelGraph:
    role: str
    layers: tuple[LayerSpec, ...]
    in_channels: int = 1
    weights: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        names = [l.name for l in self.layers]
        if len(set(names)) != len(names):
            raise ValueError("duplicate layer names")

    # -- static shape bookkeeping -------------------------------------------

    def channel_plan(self) -> dict[str, int]:
        """Output channel count per layer, following the skip topology."""
        chans: dict[str, int] = {"input": self.in_channels}
        cur = self.in_channels
        for spec in self.layers:
            if spec.kind in ("conv2d", "conv2d_transpose"):
                cur = spec.filters
            elif spec.kind == "concat_skip":
                if spec.skip_from not in chans:
                    raise ValueError(
                        f"layer {spec.name}: skip_from {spec.skip_from!r} is not an earlier layer"
                    )
                cur = cur + chans[spec.skip_from]
            chans[spec.name] = cur
        return chans

    def expected_weight_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes: dict[str, tuple[int, ...]] = {}
        chans = self.channel_plan()
        cur = self.in_channels
        for spec in self.layers:
            kh, kw = spec.kernel
            if spec.kind == "conv2d":
                shapes[f"{spec.name}.w"] = (kh, kw, cur, spec.filters)
                shapes[f"{spec.name}.b"] = (spec.filters,)
                if spec.spectral_norm:
                    shapes[f"{spec.name}.u"] = (spec.filters,)
            elif spec.kind == "conv2d_transpose":
                if spec.semantics == "pad_input":
                    shapes[f"{spec.name}.w"] = (kh, kw, spec.filters, cur)
                else:
                    shapes[f"{spec.name}.w"] = (kh, kw, cur, spec.filters)
                shapes[f"{spec.name}.b"] = (spec.filters,)
            elif spec.kind in ("instance_norm", "batch_norm"):
                shapes[f"{spec.name}.gamma"] = (cur,)
                shapes[f"{spec.name}.beta"] = (cur,)
                if spec.kind == "batch_norm":
                    shapes[f"{spec.name}.mean"] = (cur,)
                    shapes[f"{spec.name}.var"] = (cur,)
            cur = chans[spec.name]
        return shapes

    def check_weights(self, store: dict | None = None) -> None:
        """Missing or mis-shaped tensors are errors; extras only warn."""
        store = self.weights if store is None else store
        expected = self.expected_weight_shapes()
        for name, shape in expected.items():
            if name not in store:
                raise KeyError(f"missing weight tensor {name!r}")
            got = tuple(store[name].shape)
            if got != shape:
                raise ValueError(f"weight {name!r} has shape {got}, expected {shape}")
        extra = sorted(set(store) - set(expected))
        if extra:
            warnings.warn(f"ignoring unused weight tensors: {', '.join(extra)}")

    def init_weights(self, seed: int = 0, scale: float = 0.02) -> dict:
        """Gaussian kernels (std ``scale``), zero biases, unit norm gains."""
        rng = np.random.default_rng(seed)
        store: dict[str, np.ndarray] = {}
        for name, shape in self.expected_weight_shapes().items():
            leaf = name.rsplit(".", 1)[1]
            if leaf == "w":
                t = rng.normal(0.0, scale, size=shape)
            elif leaf in ("b", "beta", "mean"):
                t = np.zeros(shape)
            elif leaf in ("gamma", "var"):
                t = np.ones(shape)
            elif leaf == "u":
                t = rng.normal(size=shape)
                t /= np.linalg.norm(t)
            else:
                raise AssertionError(name)
            store[name] = t.astype(np.float32)
        self.weights = store
        return store


def _spectral_scale(w: np.ndarray, u: np.ndarray) -> float:
    """sigma = ||W^T u|| for the stored direction u (u is updated by the
    training loop, never inside a forward pass)."""
    mat = ops.weight_matrix(w)
    sigma = float(np.linalg.norm(mat.T @ np.asarray(u, dtype=np.float64)))
    if sigma == 0.0:
        raise ValueError("zero weight matrix under spectral normalization")
    return sigma


def forward(graph: ModelGraph, x: np.ndarray, capture: bool = False):
    """Run the graph on a NHWC batch.

    With capture=True returns (output, {layer name: activation}) including
    the "input" entry, for parity checks against exported references.
    """
    x = np.asarray(x)
    if x.ndim != 4 or x.shape[3] != graph.in_channels:
        raise ValueError(
            f"input shape {x.shape} does not match NHWC with {graph.in_channels} channels"
        )
    store = graph.weights
    acts: dict[str, np.ndarray] = {"input": x}
    skip_sources = {s.skip_from for s in graph.layers if s.kind == "concat_skip"}
    cur = x
    for spec in graph.layers:
        try:
            if spec.kind == "conv2d":
                w = store[f"{spec.name}.w"]
                if spec.spectral_norm:
                    w = w / _spectral_scale(w, store[f"{spec.name}.u"])
                cur = ops.conv2d(cur, w, store[f"{spec.name}.b"], spec.stride, spec.padding)
            elif spec.kind == "conv2d_transpose":
                cur = ops.conv2d_transpose(
                    cur, store[f"{spec.name}.w"], store[f"{spec.name}.b"],
                    spec.stride, spec.semantics,
                )
            elif spec.kind == "leaky_relu":
                cur = ops.leaky_relu(cur, spec.alpha)
            elif spec.kind == "tanh":
                cur = ops.tanh(cur)
            elif spec.kind == "sigmoid":
                cur = ops.sigmoid(cur)
            elif spec.kind == "instance_norm":
                cur = ops.instance_norm(
                    cur, store[f"{spec.name}.gamma"], store[f"{spec.name}.beta"]
                )
            elif spec.kind == "batch_norm":
                cur = ops.batch_norm_inference(
                    cur,
                    store[f"{spec.name}.mean"], store[f"{spec.name}.var"],
                    store[f"{spec.name}.gamma"], store[f"{spec.name}.beta"],
                )
            elif spec.kind == "concat_skip":
                other = acts[spec.skip_from]
                if other.shape[:3] != cur.shape[:3]:
                    raise ValueError(
                        f"skip source {spec.skip_from!r} shape {other.shape} does not "
                        f"align with {cur.shape}"
                    )
                cur = np.concatenate([cur, other], axis=3)
            else:  # pragma: no cover - LayerSpec validates kinds
                raise ValueError(f"unknown layer kind {spec.kind!r}")
        except (ValueError, KeyError) as err:
            raise ValueError(f"layer {spec.name!r}: {err}") from err
        if capture or spec.name in skip_sources:
            acts[spec.name] = cur
    return (cur, acts) if capture else cur


@dataclass(frozen=True)
class ModelConfig:
    """Architecture knobs shared by the builders.

    resolution must be divisible by 2^levels; the defaults give the full
    512 -> 16 pyramid, tests shrink both for desk-scale runs.
    """

    resolution: int = 512
    in_channels: int = 1
    out_channels: int = 1
    base_filters: int = 16
    disc_base_filters: int = 32
    levels: int = 5

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.resolution % (1 << self.levels) != 0:
            raise ValueError(
                f"resolution {self.resolution} not divisible by 2^{self.levels}"
            )


def build_generator(config: ModelConfig, role: str = "stage1_unet") -> ModelGraph:
    """Strided encoder/decoder with skip concatenations and sigmoid output.

    Encoder level i halves resolution with 3x3 stride-2 convs at
    base_filters * 2^i channels (instance norm everywhere but the stem);
    the decoder mirrors it with stride-2 transposed convs, concatenating the
    same-resolution encoder activation, and ends in a 1x1 conv + sigmoid.
    """
    if role not in ("stage1_unet", "generator_G", "generator_F"):
        raise ValueError(f"not a generator role: {role!r}")
    L = config.levels
    layers: list[LayerSpec] = []
    for i in range(L):
        f = config.base_filters * (1 << i)
        layers.append(LayerSpec(f"enc{i}_conv", "conv2d", (3, 3), 2, f))
        if i > 0:
            layers.append(LayerSpec(f"enc{i}_norm", "instance_norm"))
        layers.append(LayerSpec(f"enc{i}_act", "leaky_relu"))
    for d in range(L - 1, -1, -1):
        f = config.base_filters * (1 << max(d - 1, 0))
        layers.append(LayerSpec(f"up{d}_tconv", "conv2d_transpose", (3, 3), 2, f))
        layers.append(LayerSpec(f"up{d}_norm", "instance_norm"))
        layers.append(LayerSpec(f"up{d}_act", "leaky_relu"))
        if d > 0:
            layers.append(
                LayerSpec(f"up{d}_cat", "concat_skip", skip_from=f"enc{d - 1}_act")
            )
    layers.append(LayerSpec("out_conv", "conv2d", (1, 1), 1, config.out_channels))
    layers.append(LayerSpec("out_act", "sigmoid"))
    return ModelGraph(role=role, layers=tuple(layers), in_channels=config.in_channels)


def build_discriminator(config: ModelConfig, role: str = "discriminator_Y") -> ModelGraph:
    """Patch discriminator: five 4x4 stride-2 convs then a 1x1 linear head,
    giving a 16x16x1 score map at 512x512 input.  Spectral normalization is
    applied to discriminator_X only."""
    if role not in ("discriminator_X", "discriminator_Y"):
        raise ValueError(f"not a discriminator role: {role!r}")
    sn = role == "discriminator_X"
    layers: list[LayerSpec] = []
    for i in range(5):
        f = config.disc_base_filters * (1 << i)
        layers.append(LayerSpec(f"d{i}_conv", "conv2d", (4, 4), 2, f, spectral_norm=sn))
        layers.append(LayerSpec(f"d{i}_act", "leaky_relu"))
    layers.append(LayerSpec("score_conv", "conv2d", (1, 1), 1, 1, spectral_norm=sn))
    return ModelGraph(role=role, layers=tuple(layers), in_channels=config.in_channels)
