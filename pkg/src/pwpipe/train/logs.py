"""Plain-text training logs.

Layout: '#'-prefixed header lines of "key = value" pairs echoing the run
configuration, then a column-name row, then one whitespace-delimited numeric
row per record.  Trailing '#' lines are allowed (used for held-out
evaluations) and are returned with the metadata.
"""

from __future__ import annotations

import numpy as np


def write_training_log(path, meta: dict, columns: list[str], rows: list[tuple]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# pwpipe training log\n")
        for key in meta:
            fh.write(f"# {key} = {meta[key]}\n")
        fh.write(" ".join(columns) + "\n")
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"row width {len(row)} != {len(columns)} columns")
            fh.write(" ".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".10g")


def append_log_note(path, note: str) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(f"# {note}\n")


def read_training_log(path) -> tuple[dict, dict]:
    """Returns (meta, columns) where columns maps name -> float array."""
    meta: dict[str, str] = {}
    notes: list[str] = []
    names: list[str] | None = None
    data: list[list[float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    meta[key.strip()] = value.strip()
                elif body:
                    notes.append(body)
                continue
            if names is None:
                names = line.split()
                continue
            values = [float(tok) for tok in line.split()]
            if len(values) != len(names):
                raise ValueError(f"log row has {len(values)} fields, expected {len(names)}")
            data.append(values)
    if names is None:
        raise ValueError("log contains no column header")
    meta["_notes"] = notes
    table = np.asarray(data, dtype=np.float64).reshape(len(data), len(names))
    return meta, {n: table[:, i] for i, n in enumerate(names)}
