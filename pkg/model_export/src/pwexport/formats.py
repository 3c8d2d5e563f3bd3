"""Readers and writers for the pipeline's portable file formats.

The byte layouts are fixed by the consuming pipeline's file-format
documentation; they are implemented here independently so the exporter talks
to the pipeline only through files and its command line.

PWNN (tensor container), little-endian:
    magic "PWNN", u32 version (1), u32 tensor count, then per tensor sorted
    by name: u16 name length, UTF-8 name, u8 rank (max 8), rank u32 dims,
    f32 payload row-major.

PWIM (raw image), little-endian:
    magic "PWIM", u32 version (1), u32 width, u32 height, f64 lateral
    min/max and axial min/max in meters, u8 stage tag, then width x height
    f32 pixels row-major.
"""

from __future__ import annotations

import struct

import numpy as np


class FormatError(ValueError):
    """A file does not follow the declared layout."""


_PWNN_MAGIC = b"PWNN"
_PWNN_VERSION = 1
_MAX_RANK = 8


def save_pwnn(store: dict, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_PWNN_MAGIC)
        fh.write(struct.pack("<II", _PWNN_VERSION, len(store)))
        for name in sorted(store):
            t = np.asarray(store[name])
            if t.ndim > _MAX_RANK:
                raise ValueError(f"tensor {name!r} rank {t.ndim} exceeds {_MAX_RANK}")
            enc = name.encode("utf-8")
            if len(enc) > 0xFFFF:
                raise ValueError(f"tensor name too long: {name[:32]!r}...")
            fh.write(struct.pack("<H", len(enc)))
            fh.write(enc)
            fh.write(struct.pack("<B", t.ndim))
            fh.write(struct.pack(f"<{t.ndim}I", *t.shape))
            fh.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def load_pwnn(path) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != _PWNN_MAGIC:
        raise FormatError(f"not a PWNN file: bad magic {raw[:4]!r}")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != _PWNN_VERSION:
        raise FormatError(f"unsupported PWNN version {version}")
    pos = 12
    store: dict[str, np.ndarray] = {}
    for _ in range(count):
        if pos + 2 > len(raw):
            raise FormatError("truncated PWNN file in tensor header")
        (nlen,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        name = raw[pos : pos + nlen].decode("utf-8")
        pos += nlen
        if pos + 1 > len(raw):
            raise FormatError(f"truncated PWNN file after name {name!r}")
        rank = raw[pos]
        pos += 1
        if rank > _MAX_RANK:
            raise FormatError(f"tensor {name!r} rank {rank} exceeds {_MAX_RANK}")
        if pos + 4 * rank > len(raw):
            raise FormatError(f"truncated dims for tensor {name!r}")
        dims = struct.unpack_from(f"<{rank}I", raw, pos)
        pos += 4 * rank
        n = int(np.prod(dims, dtype=np.int64)) if rank else 1
        if pos + 4 * n > len(raw):
            raise FormatError(f"truncated payload for tensor {name!r}")
        data = np.frombuffer(raw, dtype="<f4", count=n, offset=pos).copy()
        pos += 4 * n
        if name in store:
            raise FormatError(f"duplicate tensor name {name!r}")
        store[name] = data.reshape(dims).astype(np.float32)
    if pos != len(raw):
        raise FormatError(f"{len(raw) - pos} trailing bytes after last tensor")
    return store


def pwnn_shapes(path) -> dict:
    """Tensor name -> shape tuple, payloads discarded."""
    return {name: tuple(t.shape) for name, t in load_pwnn(path).items()}


_PWIM_MAGIC = b"PWIM"
_PWIM_VERSION = 1
_PWIM_HEADER = struct.Struct("<4sIII4dB")
DEFAULT_EXTENTS = (-0.02, 0.02, 0.0, 0.04)


def save_pwim(pixels: np.ndarray, path, extents=DEFAULT_EXTENTS, stage_tag: int = 0) -> None:
    px = np.asarray(pixels, dtype=np.float32)
    if px.ndim != 2:
        raise ValueError(f"pixels must be 2-D, got shape {px.shape}")
    if px.size and (px.min() < -1e-9 or px.max() > 1.0 + 1e-9):
        raise ValueError(f"pixels outside [0, 1]: min {px.min()}, max {px.max()}")
    h, w = px.shape
    header = _PWIM_HEADER.pack(
        _PWIM_MAGIC, _PWIM_VERSION, w, h, extents[0], extents[1], extents[2], extents[3],
        int(stage_tag),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(px, dtype="<f4").tobytes())


def load_pwim(path) -> tuple:
    """Returns (pixels, extents, stage_tag)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _PWIM_HEADER.size:
        raise FormatError(f"file too short for PWIM header: {len(raw)} bytes")
    magic, version, width, height, lat0, lat1, ax0, ax1, tag = _PWIM_HEADER.unpack_from(raw)
    if magic != _PWIM_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {_PWIM_MAGIC!r}")
    if version != _PWIM_VERSION:
        raise FormatError(f"unsupported PWIM version {version}")
    payload = raw[_PWIM_HEADER.size :]
    if len(payload) != width * height * 4:
        raise FormatError(
            f"pixel payload truncated: expected {width * height * 4} bytes, got {len(payload)}"
        )
    pixels = np.frombuffer(payload, dtype="<f4").reshape(height, width).astype(np.float32)
    return pixels, (lat0, lat1, ax0, ax1), int(tag)
