"""Forward-pass parity between converted weights and reference activations.

The reference file is a tensor container holding the network input under
"input" plus one activation per layer, captured from whatever runtime the
weights came from.  Verification replays the same input through the
consuming pipeline's command line (``pwpipe infer --capture``) with the
converted weights and compares the two captures layer by layer, in forward
order, reporting the max absolute deviation per layer.
"""

from __future__ import annotations

import os
import subprocess
import sys
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .formats import load_pwnn, save_pwim

GENERATOR_ROLES = ("stage1_unet", "generator_G", "generator_F")


class ParityError(RuntimeError):
    """Structural failure: the comparison itself cannot be carried out."""


def generator_layer_sequence(levels: int) -> list:
    """Forward-order layer names of the pipeline's generator topology.

    The encoder halves resolution per level (stride-2 conv, instance norm
    from level 1 on, leaky relu); the decoder mirrors it with transposed
    convs and skip concatenations and ends in a 1x1 conv + sigmoid.  The
    names match the consuming pipeline's weight and capture files.
    """
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    seq = []
    for i in range(levels):
        seq.append(f"enc{i}_conv")
        if i > 0:
            seq.append(f"enc{i}_norm")
        seq.append(f"enc{i}_act")
    for d in range(levels - 1, -1, -1):
        seq += [f"up{d}_tconv", f"up{d}_norm", f"up{d}_act"]
        if d > 0:
            seq.append(f"up{d}_cat")
    seq += ["out_conv", "out_act"]
    return seq


@dataclass
class LayerParity:
    name: str
    max_abs_dev: float
    ok: bool


@dataclass
class ParityReport:
    passed: bool
    tolerance: float
    layers: list = field(default_factory=list)
    first_divergent: str | None = None

    def failing(self) -> list:
        return [l.name for l in self.layers if not l.ok]


def _run_infer(config_path, input_path, output_path, weights_path, capture_path, role):
    cmd = [
        sys.executable, "-m", "pwpipe.cli", "infer",
        str(config_path), str(input_path), str(output_path),
        "--weights", str(weights_path), "--role", role, "--capture", str(capture_path),
    ]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise ParityError(
            f"pipeline inference failed (exit {proc.returncode}): {proc.stderr.strip()}"
        )


def verify_parity(
    weights_path,
    reference_path,
    tolerance: float,
    *,
    resolution: int,
    base_filters: int,
    levels: int,
    role: str = "stage1_unet",
    workdir=None,
) -> ParityReport:
    """Compare a converted weight file against captured reference activations.

    Passes iff every layer's max absolute deviation is <= tolerance; the
    first layer in forward order to exceed it is named.  Layers missing from
    either capture raise ParityError rather than failing the comparison.
    """
    if tolerance < 0:
        raise ValueError(f"tolerance must be >= 0, got {tolerance}")
    if role not in GENERATOR_ROLES:
        raise ValueError(f"role must be one of {GENERATOR_ROLES}, got {role!r}")
    ref = load_pwnn(reference_path)
    if "input" not in ref:
        raise ParityError("reference capture has no 'input' tensor")
    x = np.asarray(ref["input"])
    if x.ndim != 4 or x.shape[0] != 1 or x.shape[3] != 1:
        raise ParityError(f"reference input must be (1, h, w, 1), got {x.shape}")
    if x.shape[1] != resolution or x.shape[2] != resolution:
        raise ParityError(
            f"reference input is {x.shape[1]}x{x.shape[2]} but the declared "
            f"model resolution is {resolution}"
        )
    sequence = ["input"] + generator_layer_sequence(levels)
    missing_ref = [n for n in sequence if n not in ref]
    if missing_ref:
        raise ParityError(f"reference capture is missing layers: {', '.join(missing_ref)}")

    own_dir = workdir is None
    workdir = tempfile.mkdtemp(prefix="pwexport_parity_") if own_dir else str(workdir)
    cfg = os.path.join(workdir, "infer.cfg")
    with open(cfg, "w", encoding="utf-8") as fh:
        fh.write("stage = histogram_only\n")
        fh.write(f"out_width = {resolution}\nout_height = {resolution}\n")
        fh.write(f"base_filters = {base_filters}\nlevels = {levels}\n")
    in_img = os.path.join(workdir, "input.pwim")
    save_pwim(x[0, :, :, 0], in_img)
    capture = os.path.join(workdir, "capture.pwnn")
    _run_infer(cfg, in_img, os.path.join(workdir, "output.pwim"), weights_path, capture, role)
    got = load_pwnn(capture)
    missing_got = [n for n in sequence if n not in got]
    if missing_got:
        raise ParityError(f"pipeline capture is missing layers: {', '.join(missing_got)}")

    layers = []
    first = None
    for name in sequence:
        a, b = np.asarray(ref[name], dtype=np.float64), np.asarray(got[name], dtype=np.float64)
        if a.shape != b.shape:
            raise ParityError(
                f"layer {name!r}: reference shape {a.shape} vs pipeline shape {b.shape}"
            )
        dev = float(np.max(np.abs(a - b))) if a.size else 0.0
        ok = dev <= tolerance
        if not ok and first is None:
            first = name
        layers.append(LayerParity(name=name, max_abs_dev=dev, ok=ok))
    return ParityReport(
        passed=first is None, tolerance=tolerance, layers=layers, first_divergent=first
    )


def write_parity_report(report: ParityReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"parity tolerance {report.tolerance:g}\n")
        fh.write("layer\tmax_abs_dev\tstatus\n")
        for l in report.layers:
            fh.write(f"{l.name}\t{l.max_abs_dev:.8g}\t{'ok' if l.ok else 'DIVERGENT'}\n")
        if report.passed:
            fh.write("result: PASS\n")
        else:
            fh.write(f"result: FAIL (first divergent layer: {report.first_divergent})\n")
