"""End-to-end orchestration: stage selection, the streaming benchmark loop
and report row assembly.

The display stage is one of:
  histogram_only  - classical enhancement (histogram matching) only
  stage1          - the paired-trained generator
  stage1_plus_2   - both generators chained
  stage2_only     - the second generator alone, for re-running a saved
                    stage-1 output file through stage 2
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import config as cfgmod
from . import imgproc
from .acquisition import RFFrame, load_rf
from .beamform import PixelGrid, das_beamform
from .imgproc import (
    BModeImage,
    EnhanceParams,
    StageTag,
    bicubic_resize,
    default_reference_cdf,
    envelope,
    histogram_match,
    load_image,
    load_reference_cdf,
    log_compress,
    save_image,
    save_pgm,
)
from .metrics import RoiSet, cnr, line_std, load_rois, nrmse, roi_std, ssim
from .nn import ModelConfig, build_generator, forward, load_weights

STAGES = ("histogram_only", "stage1", "stage1_plus_2", "stage2_only")


class ConfigurationError(ValueError):
    """Raised before any compute when a run is not satisfiable."""


class BenchError(RuntimeError):
    """Raised when the benchmark cannot produce valid statistics."""


@dataclass
class PipelineConfig:
    stage: str = "histogram_only"
    weights_stage1: str | None = None
    weights_stage2: str | None = None
    reference_cdf: str | None = None
    rois: str | None = None
    ground_truth: str | None = None
    f_number: float = 0.81
    dynamic_range_db: float = 60.0
    out_width: int = 512
    out_height: int = 512
    unsharp_sigma: float = 3.0
    unsharp_amount: float = 0.8
    base_filters: int = 16
    levels: int = 5
    bench_duration_s: float = 2.0
    warmup_frames: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ConfigurationError(f"stage must be one of {STAGES}, got {self.stage!r}")
        if self.bench_duration_s <= 0:
            raise ConfigurationError("bench_duration_s must be > 0")
        if self.warmup_frames < 0:
            raise ConfigurationError("warmup_frames must be >= 0")

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        cfg = cfgmod.load_config(path)
        kwargs = {}
        for f in (
            "f_number", "dynamic_range_db", "unsharp_sigma", "unsharp_amount",
            "bench_duration_s",
        ):
            if f in cfg:
                kwargs[f] = cfgmod.get_float(cfg, f)
        for f in ("out_width", "out_height", "base_filters", "levels", "warmup_frames", "seed"):
            if f in cfg:
                kwargs[f] = cfgmod.get_int(cfg, f)
        for f in ("stage", "weights_stage1", "weights_stage2", "reference_cdf", "rois",
                  "ground_truth"):
            if f in cfg:
                kwargs[f] = cfg[f]
        known = set(kwargs)
        extra = set(cfg) - known
        if extra:
            raise ConfigurationError(f"unknown config keys: {', '.join(sorted(extra))}")
        return cls(**kwargs)

    # -- resource resolution -------------------------------------------------

    def needed_weights(self) -> list[tuple[str, str | None]]:
        need = []
        if self.stage in ("stage1", "stage1_plus_2"):
            need.append(("weights_stage1", self.weights_stage1))
        if self.stage in ("stage1_plus_2", "stage2_only"):
            need.append(("weights_stage2", self.weights_stage2))
        return need

    def validate_files(self) -> None:
        for key, path in self.needed_weights():
            if not path:
                raise ConfigurationError(f"stage {self.stage!r} requires config key {key!r}")
            if not os.path.exists(path):
                raise ConfigurationError(f"{key} file not found: {path}")
        for key, path in (("reference_cdf", self.reference_cdf), ("rois", self.rois),
                          ("ground_truth", self.ground_truth)):
            if path and not os.path.exists(path):
                raise ConfigurationError(f"{key} file not found: {path}")

    def enhance_params(self) -> EnhanceParams:
        return EnhanceParams(
            f_number=self.f_number,
            dynamic_range_db=self.dynamic_range_db,
            out_width=self.out_width,
            out_height=self.out_height,
            unsharp_sigma=self.unsharp_sigma,
            unsharp_amount=self.unsharp_amount,
        )

    def model_config(self) -> ModelConfig:
        if self.out_width != self.out_height:
            raise ConfigurationError(
                f"network stages need square images, got {self.out_width}x{self.out_height}"
            )
        return ModelConfig(
            resolution=self.out_width,
            base_filters=self.base_filters,
            levels=self.levels,
        )

    def load_generators(self) -> dict[str, object]:
        """Build and weight-check the generator graphs the stage needs."""
        self.validate_files()
        graphs: dict[str, object] = {}
        roles = {"weights_stage1": "stage1_unet", "weights_stage2": "generator_G"}
        for key, path in self.needed_weights():
            g = build_generator(self.model_config(), role=roles[key])
            g.weights = load_weights(path)
            g.check_weights()
            graphs[key] = g
        return graphs

    def reference(self) -> np.ndarray:
        if self.reference_cdf:
            return load_reference_cdf(self.reference_cdf)
        return default_reference_cdf()


def _as_f32_image(img: BModeImage) -> BModeImage:
    px = np.asarray(img.pixels, dtype=np.float32)
    return BModeImage(pixels=px, grid=img.grid, stage_tag=img.stage_tag)


def _infer_image(graph, img: BModeImage, tag: StageTag) -> BModeImage:
    x = np.asarray(img.pixels, dtype=np.float32)[None, :, :, None]
    y = forward(graph, x)[0, :, :, 0]
    return BModeImage(pixels=y, grid=img.grid, stage_tag=tag)


def load_input_image(config: PipelineConfig, input_path) -> BModeImage:
    """RF files go through beamform/envelope/log/resize; image files load
    directly.  Either way the result is the network-input image."""
    p = str(input_path)
    if p.endswith(".pwrf"):
        frame = load_rf(p)
        img = imgproc.single_pw_image(frame, PixelGrid(), config.enhance_params())
        return _as_f32_image(img)
    img = load_image(p)
    return img


@dataclass
class PipelineResult:
    images: dict[str, BModeImage]
    files: dict[str, str] = field(default_factory=dict)
    metrics_rows: list = field(default_factory=list)


METRIC_COLUMNS = ("image_set", "method", "nrmse", "ssim", "speckle_std", "cnr", "fiber_std")


def _metric_row(name: str, method: str, img: BModeImage, rois: RoiSet | None, gt) -> tuple:
    vals = {k: float("nan") for k in METRIC_COLUMNS[2:]}
    if gt is not None:
        vals["nrmse"] = nrmse(img.pixels, gt.pixels)
        vals["ssim"] = ssim(img.pixels, gt.pixels)
    if rois is not None:
        vals["speckle_std"] = roi_std(img.pixels, rois.speckle_box)
        vals["cnr"] = cnr(img.pixels, rois)
        vals["fiber_std"] = line_std(img.pixels, rois.fiber_segment)
    return (name, method, vals["nrmse"], vals["ssim"], vals["speckle_std"], vals["cnr"],
            vals["fiber_std"])


def run_pipeline(config: PipelineConfig, input_path, out_dir) -> PipelineResult:
    """Process one input through the configured stage selection, write the
    per-stage image files and assemble metric rows if ROIs are configured."""
    graphs = config.load_generators()  # validates everything up front
    os.makedirs(out_dir, exist_ok=True)
    name = os.path.splitext(os.path.basename(str(input_path)))[0]

    inp = load_input_image(config, input_path)
    images: dict[str, BModeImage] = {"input": inp}

    if config.stage == "histogram_only":
        images["histogram"] = histogram_match(inp, config.reference())
    elif config.stage == "stage1":
        images["stage1"] = _infer_image(graphs["weights_stage1"], inp, StageTag.stage1_output)
    elif config.stage == "stage1_plus_2":
        s1 = _infer_image(graphs["weights_stage1"], inp, StageTag.stage1_output)
        images["stage1"] = s1
        images["stage2"] = _infer_image(graphs["weights_stage2"], s1, StageTag.stage2_output)
    elif config.stage == "stage2_only":
        images["stage2"] = _infer_image(graphs["weights_stage2"], inp, StageTag.stage2_output)

    result = PipelineResult(images=images)
    for label, img in images.items():
        base = os.path.join(out_dir, f"{name}_{label}")
        save_image(img, base + ".pwim")
        save_pgm(img, base + ".pgm")
        result.files[label] = base + ".pwim"

    rois = load_rois(config.rois) if config.rois else None
    gt = load_image(config.ground_truth) if config.ground_truth else None
    if rois is not None or gt is not None:
        for label, img in images.items():
            result.metrics_rows.append(_metric_row(name, label, img, rois, gt))
    return result


# ---------------------------------------------------------------------------
# Frame-rate benchmark


@dataclass(frozen=True)
class FrameRateReport:
    frames_processed: int
    duration_s: float
    mean_fps: float
    std_fps: float
    window_fps: tuple[float, ...]
    stage_ms: dict
    inclusive_fps: float
    exclusive_fps: float


def _stage_functions(config: PipelineConfig, rf_mode: bool):
    """Ordered (name, callable) chain for one frame."""
    params = config.enhance_params()
    grid = PixelGrid()
    stages: list[tuple[str, object]] = []
    if rf_mode:
        stages.append(("beamform", lambda fr: das_beamform(fr, grid, config.f_number)))
        stages.append((
            "form_image",
            lambda ci: _as_f32_image(
                bicubic_resize(
                    log_compress(envelope(ci), config.dynamic_range_db, grid=grid),
                    params.out_width, params.out_height,
                )
            ),
        ))
    if config.stage == "histogram_only":
        ref = config.reference()
        stages.append(("histogram", lambda img: histogram_match(img, ref)))
    else:
        graphs = config.load_generators()
        if config.stage in ("stage1", "stage1_plus_2"):
            g1 = graphs["weights_stage1"]
            stages.append(("stage1", lambda img: _infer_image(g1, img, StageTag.stage1_output)))
        if config.stage in ("stage1_plus_2", "stage2_only"):
            g2 = graphs["weights_stage2"]
            stages.append(("stage2", lambda img: _infer_image(g2, img, StageTag.stage2_output)))
    return stages


def bench_fps(
    config: PipelineConfig,
    frames,
    duration_s: float | None = None,
    warmup_frames: int | None = None,
) -> FrameRateReport:
    """Replay frames through the configured stages and measure steady-state
    throughput.

    Frames are processed in order (FIFO).  The first ``warmup_frames`` are
    excluded from statistics; measurement then runs until ``duration_s`` of
    wall time or source exhaustion.  FPS is reported as mean and population
    std over completed 1-second windows; per-stage latency is averaged over
    measured frames.  Inclusive throughput counts the whole chain,
    exclusive omits the acquisition stages (beamforming and image
    formation).
    """
    duration = config.bench_duration_s if duration_s is None else duration_s
    warmup = config.warmup_frames if warmup_frames is None else warmup_frames
    if duration < 1.0:
        raise BenchError("benchmark needs duration_s >= 1 for 1-second windows")

    it = iter(frames)
    peek = []
    try:
        first = next(it)
    except StopIteration:
        raise BenchError("frame source is empty") from None
    peek.append(first)
    rf_mode = isinstance(first, RFFrame)
    stages = _stage_functions(config, rf_mode)

    def pull():
        if peek:
            return peek.pop()
        return next(it)

    for i in range(warmup):
        try:
            frame = pull()
        except StopIteration:
            raise BenchError(
                f"frame source exhausted during warm-up ({i} of {warmup} frames)"
            ) from None
        x = frame
        for _, fn in stages:
            x = fn(x)

    completions: list[float] = []
    per_stage: dict[str, list[float]] = {name: [] for name, _ in stages}
    totals: list[float] = []
    acq = {"beamform", "form_image"}
    post: list[float] = []
    start = time.perf_counter()
    while True:
        try:
            frame = pull()
        except StopIteration:
            break
        x = frame
        t_frame = time.perf_counter()
        post_t = 0.0
        for name, fn in stages:
            t0 = time.perf_counter()
            x = fn(x)
            dt = time.perf_counter() - t0
            per_stage[name].append(dt)
            if name not in acq:
                post_t += dt
        done = time.perf_counter()
        totals.append(done - t_frame)
        post.append(post_t)
        completions.append(done - start)
        if completions[-1] >= duration:
            break

    if not completions:
        raise BenchError("frame source exhausted before any frame was measured")
    elapsed = completions[-1]
    n_windows = int(elapsed)
    if n_windows < 1:
        raise BenchError(
            f"only {elapsed:.3f}s of frames measured; need at least one full 1-second window"
        )
    times = np.asarray(completions, dtype=np.float64)
    counts = np.bincount(times[times < n_windows].astype(int), minlength=n_windows)[:n_windows]
    mean_fps = float(np.mean(counts))
    std_fps = float(np.std(counts))
    stage_ms = {name: 1000.0 * float(np.mean(ts)) for name, ts in per_stage.items()}
    return FrameRateReport(
        frames_processed=len(completions),
        duration_s=elapsed,
        mean_fps=mean_fps,
        std_fps=std_fps,
        window_fps=tuple(float(cn) for cn in counts),
        stage_ms=stage_ms,
        inclusive_fps=len(completions) / elapsed,
        exclusive_fps=1.0 / float(np.mean(post)) if np.mean(post) > 0 else float("inf"),
    )
