"""Command-line entry points.

Every subcommand reads one key=value config file plus positional paths and
accepts --seed.  Reports are tab-separated text; figure files are written
next to them.
"""

from __future__ import annotations

import argparse
import itertools
import os
import sys

import numpy as np

from . import config as cfgmod
from . import imgproc, report, stats
from .acquisition import (
    FormatError,
    ScattererField,
    TransducerGeometry,
    load_rf,
    save_rf,
    simulate_compound_set,
)
from .beamform import PixelGrid, compound, das_beamform
from .imgproc import StageTag, load_image, save_image, save_pgm
from .metrics import load_rois
from .nn import ModelConfig, build_generator, forward, load_weights, save_weights
from .pipeline import (
    BenchError,
    ConfigurationError,
    PipelineConfig,
    bench_fps,
    load_input_image,
    run_pipeline,
)
from .train import CycleGANConfig, Stage1Config, train_cyclegan_toy, train_stage1_toy


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="override the config seed")


def _grid_region(grid: PixelGrid) -> tuple[float, float, float, float]:
    return grid.lateral_min, grid.lateral_max, grid.axial_min, grid.axial_max


def _make_field(cfg: dict, seed: int) -> ScattererField:
    phantom = cfgmod.get_str(cfg, "phantom", "speckle")
    rng = np.random.default_rng(seed)
    grid = PixelGrid()
    x0, x1, z0, z1 = _grid_region(grid)
    if phantom == "point":
        px = cfgmod.get_float(cfg, "point_x", 0.0)
        pz = cfgmod.get_float(cfg, "point_z", 0.02)
        return ScattererField(positions=np.array([[px, pz]]), reflectivities=np.array([1.0]))
    if phantom in ("speckle", "lesion"):
        count = cfgmod.get_int(cfg, "scatterer_count", 4000)
        pos = np.column_stack([
            rng.uniform(x0, x1, size=count),
            rng.uniform(max(z0, 1e-3), z1, size=count),
        ])
        refl = rng.rayleigh(1.0, size=count)
        if phantom == "lesion":
            # hypoechoic disk at (-5 mm, 20 mm), hyperechoic at (+5 mm, 20 mm)
            r = cfgmod.get_float(cfg, "lesion_radius", 0.004)
            hypo = np.hypot(pos[:, 0] + 0.005, pos[:, 1] - 0.02) < r
            hyper = np.hypot(pos[:, 0] - 0.005, pos[:, 1] - 0.02) < r
            refl = np.where(hypo, refl * 0.1, refl)
            refl = np.where(hyper, refl * 3.0, refl)
        return ScattererField(positions=pos, reflectivities=refl)
    raise ConfigurationError(f"unknown phantom {phantom!r}")


def cmd_simulate(args) -> int:
    cfg = cfgmod.load_config(args.config)
    seed = args.seed if args.seed is not None else cfgmod.get_int(cfg, "seed", 0)
    field = _make_field(cfg, seed)
    angles = tuple(
        float(tok) for tok in cfgmod.get_str(cfg, "angles_deg", "-3,0,3").split(",")
    )
    repeats = cfgmod.get_int(cfg, "repeats", 4)
    noise_std = cfgmod.get_float(cfg, "noise_std", 0.0)
    geom = TransducerGeometry()
    frames = simulate_compound_set(
        geom, field, angles_deg=angles, repeats=repeats, noise_std=noise_std, seed=seed
    )
    os.makedirs(args.out_dir, exist_ok=True)
    rows = []
    for i, frame in enumerate(frames):
        name = f"frame{i:02d}.pwrf"
        save_rf(frame, os.path.join(args.out_dir, name))
        rows.append((name, np.degrees(frame.steer_angle), frame.sample_count))
    report.write_table(
        os.path.join(args.out_dir, "manifest.tsv"), ["file", "steer_deg", "samples"], rows
    )
    print(f"wrote {len(frames)} frames to {args.out_dir}")
    return 0


def cmd_beamform(args) -> int:
    cfg = PipelineConfig.from_file(args.config)
    frames = [load_rf(p) for p in args.rf_files]
    grid = PixelGrid()
    cimgs = [das_beamform(f, grid, cfg.f_number) for f in frames]
    if len(cimgs) == 1:
        ci, tag = cimgs[0], StageTag.plane_wave_input
    else:
        ci, tag = compound(cimgs), StageTag.compounded
    img = imgproc.log_compress(imgproc.envelope(ci), cfg.dynamic_range_db, grid=grid,
                               stage_tag=tag)
    img = imgproc.bicubic_resize(img, cfg.out_width, cfg.out_height)
    save_image(img, args.out)
    save_pgm(img, os.path.splitext(args.out)[0] + ".pgm")
    print(f"wrote {args.out} ({len(frames)} frame{'s' if len(frames) != 1 else ''}, "
          f"tag {img.stage_tag.name})")
    return 0


def cmd_enhance(args) -> int:
    cfg = PipelineConfig.from_file(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.ground_truth:
        frames = [load_rf(p) for p in args.inputs]
        img = imgproc.make_ground_truth(
            frames, PixelGrid(), cfg.enhance_params(),
            reference_cdf=cfg.reference(),
        )
        os.makedirs(args.out_dir, exist_ok=True)
        out = os.path.join(args.out_dir, "ground_truth.pwim")
        save_image(img, out)
        save_pgm(img, os.path.join(args.out_dir, "ground_truth.pgm"))
        print(f"wrote {out}")
        return 0
    if len(args.inputs) != 1:
        raise ConfigurationError("enhance takes exactly one input unless --ground-truth")
    result = run_pipeline(cfg, args.inputs[0], args.out_dir)
    if result.metrics_rows:
        path = os.path.join(args.out_dir, "metrics.tsv")
        report.emit_report(result.metrics_rows, path)
        report.render_metric_bars(result.metrics_rows, os.path.join(args.out_dir, "metrics.png"))
    report.render_panes(result.images, os.path.join(args.out_dir, "panes.png"))
    print(f"wrote {', '.join(sorted(result.files))} to {args.out_dir}")
    return 0


def cmd_infer(args) -> int:
    cfg = PipelineConfig.from_file(args.config)
    graph = build_generator(cfg.model_config(), role=args.role)
    graph.weights = load_weights(args.weights)
    graph.check_weights()
    img = load_image(args.input)
    x = np.asarray(img.pixels, dtype=np.float32)[None, :, :, None]
    if args.capture:
        y, acts = forward(graph, x, capture=True)
        save_weights(acts, args.capture)
    else:
        y = forward(graph, x)
    tag = StageTag.stage2_output if args.role in ("generator_G", "generator_F") \
        else StageTag.stage1_output
    out_img = imgproc.BModeImage(pixels=y[0, :, :, 0], grid=img.grid, stage_tag=tag)
    save_image(out_img, args.output)
    print(f"wrote {args.output}")
    return 0


def cmd_train_toy(args) -> int:
    cfg = cfgmod.load_config(args.config)
    task = cfgmod.get_str(cfg, "task", "stage1")
    seed = args.seed if args.seed is not None else cfgmod.get_int(cfg, "seed", 0)
    os.makedirs(args.out_dir, exist_ok=True)
    if task == "stage1":
        sc = Stage1Config(
            pair_count=cfgmod.get_int(cfg, "pair_count", 200),
            resolution=cfgmod.get_int(cfg, "resolution", 64),
            base_filters=cfgmod.get_int(cfg, "base_filters", 8),
            levels=cfgmod.get_int(cfg, "levels", 4),
            epochs=cfgmod.get_int(cfg, "epochs", 30),
            lr=cfgmod.get_float(cfg, "lr", 2e-4),
            seed=seed,
            weights_path=os.path.join(args.out_dir, "stage1.pwnn"),
            log_path=os.path.join(args.out_dir, "stage1_log.txt"),
        )
        res = train_stage1_toy(sc)
        report.render_training_curves(sc.log_path, os.path.join(args.out_dir, "stage1_loss.png"))
        print(f"best val L1 {res.best_val:.6f} at epoch {res.best_epoch}")
        return 0
    if task == "cyclegan":
        cc = CycleGANConfig(
            domain_size=cfgmod.get_int(cfg, "domain_size", 60),
            resolution=cfgmod.get_int(cfg, "resolution", 64),
            base_filters=cfgmod.get_int(cfg, "base_filters", 8),
            disc_base_filters=cfgmod.get_int(cfg, "disc_base_filters", 8),
            levels=cfgmod.get_int(cfg, "levels", 4),
            steps=cfgmod.get_int(cfg, "steps", 500),
            seed=seed,
            log_path=os.path.join(args.out_dir, "cyclegan_log.txt"),
            weights_g_path=os.path.join(args.out_dir, "gen_G.pwnn"),
            weights_f_path=os.path.join(args.out_dir, "gen_F.pwnn"),
            weights_dx_path=os.path.join(args.out_dir, "disc_X.pwnn"),
            weights_dy_path=os.path.join(args.out_dir, "disc_Y.pwnn"),
        )
        res = train_cyclegan_toy(cc)
        report.render_training_curves(cc.log_path, os.path.join(args.out_dir, "cyclegan_loss.png"))
        cyc = [r[4] + r[8] for r in res.rows]
        print(f"cycle loss first-50 mean {np.mean(cyc[:50]):.6f}, "
              f"last-50 mean {np.mean(cyc[-50:]):.6f}")
        return 0
    raise ConfigurationError(f"unknown task {task!r} (expected stage1 or cyclegan)")


def cmd_metrics(args) -> int:
    cfg = PipelineConfig.from_file(args.config)
    cfg.validate_files()
    rois = load_rois(cfg.rois) if cfg.rois else None
    gt = load_image(cfg.ground_truth) if cfg.ground_truth else None
    if rois is None and gt is None:
        raise ConfigurationError("metrics needs rois and/or ground_truth in the config")
    from .pipeline import _metric_row

    rows = []
    for p in args.images:
        img = load_image(p)
        name = os.path.splitext(os.path.basename(p))[0]
        rows.append(_metric_row(name, img.stage_tag.name, img, rois, gt))
    os.makedirs(args.out_dir, exist_ok=True)
    path = os.path.join(args.out_dir, "metrics.tsv")
    report.emit_report(rows, path)
    report.render_metric_bars(rows, os.path.join(args.out_dir, "metrics.png"))
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


def cmd_stats(args) -> int:
    cfg = cfgmod.load_config(args.config)
    table = stats.load_score_table(args.scores)
    mean_scores = stats.average_readers(table)
    os.makedirs(args.out_dir, exist_ok=True)
    for ci, criterion in enumerate(stats.CRITERIA):
        blocks = mean_scores[:, :, ci]
        fr = stats.friedman_test(blocks)
        nem = stats.nemenyi_posthoc(blocks)
        ranks = stats.mean_ranks(blocks)
        path = os.path.join(args.out_dir, f"stats_{criterion}.tsv")
        report.emit_stats_report(path, stats.METHODS, ranks, fr, nem)
        report.render_mean_ranks(
            stats.METHODS, ranks, os.path.join(args.out_dir, f"mean_ranks_{criterion}.png")
        )
        print(f"{criterion}: Friedman chi2 {fr[0]:.4f}, p {fr[1]:.4g} -> {path}")
    if "effect_size" in cfg:
        n = stats.sample_size(
            cfgmod.get_float(cfg, "effect_size"),
            cfgmod.get_float(cfg, "alpha", 0.05),
            cfgmod.get_float(cfg, "power", 0.8),
            cfgmod.get_int(cfg, "k_groups", len(stats.METHODS)),
        )
        report.write_table(
            os.path.join(args.out_dir, "sample_size.tsv"),
            ["quantity", "value"], [("required_n", n)],
        )
        print(f"required sample size: {n}")
    return 0


def cmd_bench(args) -> int:
    cfg = PipelineConfig.from_file(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    inputs = [
        load_rf(p) if p.endswith(".pwrf") else load_input_image(cfg, p) for p in args.inputs
    ]
    rep = bench_fps(cfg, itertools.cycle(inputs))
    os.makedirs(args.out_dir, exist_ok=True)
    path = os.path.join(args.out_dir, "fps.tsv")
    report.emit_fps_report(rep, path)
    report.render_fps(rep, os.path.join(args.out_dir, "fps.png"))
    print(
        f"{cfg.stage}: {rep.mean_fps:.1f} +/- {rep.std_fps:.1f} FPS over "
        f"{len(rep.window_fps)} windows ({rep.frames_processed} frames)"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pwpipe",
        description="Single-plane-wave ultrasound enhancement pipeline",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate RF channel data for a phantom")
    p.add_argument("config")
    p.add_argument("out_dir")
    _add_common(p)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("beamform", help="beamform RF frames into a B-mode image")
    p.add_argument("config")
    p.add_argument("rf_files", nargs="+")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_beamform)

    p = sub.add_parser("enhance", help="run the staged enhancement pipeline")
    p.add_argument("config")
    p.add_argument("inputs", nargs="+")
    p.add_argument("out_dir")
    p.add_argument("--ground-truth", action="store_true",
                   help="build the filtered ground truth from a compound frame set")
    _add_common(p)
    p.set_defaults(fn=cmd_enhance)

    p = sub.add_parser("infer", help="forward one image through a generator")
    p.add_argument("config")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--weights", required=True)
    p.add_argument("--role", default="stage1_unet")
    p.add_argument("--capture", default=None,
                   help="write per-layer activations to this file")
    _add_common(p)
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("train-toy", help="desk-scale training runs")
    p.add_argument("config")
    p.add_argument("out_dir")
    _add_common(p)
    p.set_defaults(fn=cmd_train_toy)

    p = sub.add_parser("metrics", help="image-quality metrics for saved images")
    p.add_argument("config")
    p.add_argument("images", nargs="+")
    p.add_argument("out_dir")
    _add_common(p)
    p.set_defaults(fn=cmd_metrics)

    p = sub.add_parser("stats", help="reader-study statistics")
    p.add_argument("config")
    p.add_argument("scores")
    p.add_argument("out_dir")
    _add_common(p)
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("bench", help="frame-rate benchmark")
    p.add_argument("config")
    p.add_argument("inputs", nargs="+")
    p.add_argument("out_dir")
    p.add_argument("--single-thread", action="store_true",
                   help="force serial execution (execution is serial either way; "
                        "the flag pins the contract for reproducible runs)")
    _add_common(p)
    p.set_defaults(fn=cmd_bench)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigurationError, FormatError, BenchError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
