"""Neutral checkpoint container for externally trained weights.

A checkpoint is a ZIP holding ``manifest.json`` plus one little-endian f32
``.bin`` payload per tensor.  The manifest records the source's layer list
(names, kinds, per-tensor shapes), which transposed-convolution weight
layout the source framework used, and an optional target-layer mapping:

    {
      "format": "pwexport-checkpoint",
      "version": 1,
      "transpose_semantics": "pad_input" | "crop_output",
      "layers": [
        {"name": "up1_tconv", "kind": "conv2d_transpose",
         "target": "up1_tconv",
         "tensors": {"w": {"file": "up1_tconv.w.bin", "shape": [3, 3, 8, 4]},
                     "b": {"file": "up1_tconv.b.bin", "shape": [8]}}},
        ...
      ]
    }

Framework-specific readers are expected to live outside this package and
emit this layout; everything below only consumes it.
"""

from __future__ import annotations

import json
import zipfile
from dataclasses import dataclass, field

import numpy as np

FORMAT_NAME = "pwexport-checkpoint"
FORMAT_VERSION = 1
SEMANTICS = ("pad_input", "crop_output")
KINDS = ("conv2d", "conv2d_transpose", "instance_norm", "batch_norm", "other")


class CheckpointError(ValueError):
    """The checkpoint file or description violates its own contract."""


@dataclass
class CheckpointLayer:
    name: str
    kind: str
    tensors: dict  # leaf name ("w", "b", ...) -> np.ndarray
    target: str | None = None  # target layer name; defaults to ``name``

    def __post_init__(self):
        if self.kind not in KINDS:
            raise CheckpointError(f"layer {self.name!r}: unknown kind {self.kind!r}")
        if self.target is None:
            self.target = self.name
        if self.kind in ("conv2d", "conv2d_transpose"):
            w = self.tensors.get("w")
            if w is None or np.asarray(w).ndim != 4:
                got = None if w is None else np.asarray(w).shape
                raise CheckpointError(
                    f"layer {self.name!r}: kind {self.kind} needs a rank-4 'w' tensor, "
                    f"got {got}"
                )


@dataclass
class CheckpointDescription:
    transpose_semantics: str
    layers: list = field(default_factory=list)

    def __post_init__(self):
        if self.transpose_semantics not in SEMANTICS:
            raise CheckpointError(
                f"transpose_semantics must be one of {SEMANTICS}, "
                f"got {self.transpose_semantics!r}"
            )
        names = [l.name for l in self.layers]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise CheckpointError(f"duplicate layer names: {', '.join(dup)}")

    def tensor_items(self):
        """Yields (layer, leaf, array) over every payload."""
        for layer in self.layers:
            for leaf, arr in layer.tensors.items():
                yield layer, leaf, np.asarray(arr)


def save_checkpoint(desc: CheckpointDescription, path) -> None:
    manifest = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "transpose_semantics": desc.transpose_semantics,
        "layers": [],
    }
    payloads = []
    for layer in desc.layers:
        entry = {"name": layer.name, "kind": layer.kind, "target": layer.target, "tensors": {}}
        for leaf, arr in layer.tensors.items():
            arr = np.asarray(arr, dtype=np.float32)
            fname = f"{layer.name}.{leaf}.bin"
            entry["tensors"][leaf] = {"file": fname, "shape": list(arr.shape)}
            payloads.append((fname, np.ascontiguousarray(arr, dtype="<f4").tobytes()))
        manifest["layers"].append(entry)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("manifest.json", json.dumps(manifest, indent=1))
        for fname, blob in payloads:
            zf.writestr(fname, blob)


def load_checkpoint(path) -> CheckpointDescription:
    with zipfile.ZipFile(path, "r") as zf:
        try:
            manifest = json.loads(zf.read("manifest.json"))
        except KeyError:
            raise CheckpointError(f"{path}: no manifest.json in archive") from None
        if manifest.get("format") != FORMAT_NAME:
            raise CheckpointError(f"{path}: unknown format {manifest.get('format')!r}")
        if manifest.get("version") != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported version {manifest.get('version')!r}")
        layers = []
        for entry in manifest.get("layers", []):
            tensors = {}
            for leaf, meta in entry.get("tensors", {}).items():
                shape = tuple(int(s) for s in meta["shape"])
                n = int(np.prod(shape, dtype=np.int64)) if shape else 1
                blob = zf.read(meta["file"])
                if len(blob) != 4 * n:
                    raise CheckpointError(
                        f"{path}: tensor {entry.get('name')}.{leaf} payload is "
                        f"{len(blob)} bytes, declared shape {shape} needs {4 * n}"
                    )
                tensors[leaf] = np.frombuffer(blob, dtype="<f4").reshape(shape).astype(
                    np.float32
                )
            layers.append(
                CheckpointLayer(
                    name=entry["name"],
                    kind=entry["kind"],
                    tensors=tensors,
                    target=entry.get("target"),
                )
            )
    return CheckpointDescription(
        transpose_semantics=manifest["transpose_semantics"], layers=layers
    )
