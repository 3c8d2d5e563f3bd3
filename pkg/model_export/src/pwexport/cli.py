"""Command line for the checkpoint exporter.

``pwexport convert`` rewrites a neutral checkpoint as a pipeline weight
file; ``pwexport verify`` replays captured reference activations through the
pipeline and reports per-layer parity.  Exit codes: 0 success/parity pass,
2 usage or data error, 3 parity failure.
"""

from __future__ import annotations

import argparse
import sys

from .checkpoint import CheckpointError, load_checkpoint
from .convert import ConversionError, TargetDescription, convert
from .formats import FormatError
from .parity import ParityError, verify_parity, write_parity_report


def cmd_convert(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    target = TargetDescription.from_weight_file(args.template, semantics=args.semantics)
    out = convert(ckpt, target, args.out)
    print(f"wrote {out} ({len(target.tensor_shapes)} tensors, "
          f"{ckpt.transpose_semantics} -> {args.semantics})")
    return 0


def cmd_verify(args) -> int:
    report = verify_parity(
        args.weights,
        args.reference,
        args.tolerance,
        resolution=args.resolution,
        base_filters=args.base_filters,
        levels=args.levels,
        role=args.role,
    )
    if args.report:
        write_parity_report(report, args.report)
    worst = max((l.max_abs_dev for l in report.layers), default=0.0)
    if report.passed:
        print(f"parity PASS: {len(report.layers)} layers, worst deviation {worst:.3g} "
              f"<= {args.tolerance:g}")
        return 0
    print(f"parity FAIL: first divergent layer {report.first_divergent!r}, "
          f"worst deviation {worst:.3g} > {args.tolerance:g}")
    return 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pwexport",
        description="Convert externally trained checkpoints into pipeline weight files "
        "and verify forward-pass parity",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="rewrite a neutral checkpoint as a weight file")
    p.add_argument("checkpoint", help="checkpoint archive (manifest.json + tensors)")
    p.add_argument("template", help="weight file defining the target tensor names/shapes")
    p.add_argument("out", help="output weight file")
    p.add_argument("--semantics", default="pad_input",
                   choices=("pad_input", "crop_output"),
                   help="transposed-conv layout the consumer runs with")
    p.set_defaults(fn=cmd_convert)

    p = sub.add_parser("verify", help="compare converted weights against reference activations")
    p.add_argument("weights")
    p.add_argument("reference", help="capture file with 'input' and per-layer activations")
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.add_argument("--resolution", type=int, required=True)
    p.add_argument("--base-filters", type=int, required=True)
    p.add_argument("--levels", type=int, required=True)
    p.add_argument("--role", default="stage1_unet")
    p.add_argument("--report", default=None, help="write the per-layer table to this file")
    p.set_defaults(fn=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (CheckpointError, ConversionError, FormatError, ParityError, ValueError,
            OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
