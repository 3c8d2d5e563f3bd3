"""PWNN tensor container: weight checkpoints and reference activations.

Layout, little-endian: magic "PWNN", u32 version, u32 tensor_count, then per
tensor a u16 name length, the UTF-8 name, u8 rank, rank u32 dims and the f32
payload row-major.  Values are stored f32, so save/load of f32 stores is
bit-exact.
"""

from __future__ import annotations

import struct

import numpy as np

from ..acquisition import FormatError

_MAGIC = b"PWNN"
_VERSION = 1
_MAX_RANK = 8


def save_weights(store: dict, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(store)))
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


def load_weights(path) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != _MAGIC:
        raise FormatError(f"not a PWNN file: bad magic {raw[:4]!r}")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != _VERSION:
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
