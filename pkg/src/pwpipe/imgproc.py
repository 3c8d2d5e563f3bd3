"""Classical image-formation pipeline: envelope detection, log compression,
bicubic upsampling, histogram matching and unsharp masking.

The composition of all stages over a compounded transmit set produces the
filtered ground-truth images; the same stages applied to a single transmit
produce the network input images.  Also owns the PWIM raw image format, the
8-bit PGM export and the 256-bin reference-CDF file used by histogram
matching.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np
from scipy.ndimage import convolve1d

from .acquisition import FormatError, RFFrame
from .beamform import ComplexImage, PixelGrid, compound, das_beamform

HIST_BINS = 256

_PWIM_MAGIC = b"PWIM"
_PWIM_VERSION = 1
_PWIM_HEADER = struct.Struct("<4sIII4dB")


class StageTag(enum.IntEnum):
    """Which processing stage produced a B-mode image."""

    plane_wave_input = 0
    compounded = 1
    filtered_ground_truth = 2
    stage1_output = 3
    stage2_output = 4


@dataclass(frozen=True)
class BModeImage:
    """2-D scalar image in [0, 1] with physical extents and a stage tag."""

    pixels: np.ndarray  # (height, width)
    grid: PixelGrid
    stage_tag: StageTag = StageTag.plane_wave_input

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.shape != (self.grid.height, self.grid.width):
            raise ValueError(
                f"pixels shape {px.shape} does not match grid "
                f"({self.grid.height}, {self.grid.width})"
            )
        if not np.all(np.isfinite(px)):
            raise ValueError("pixels contain non-finite values")
        if px.size and (px.min() < -1e-9 or px.max() > 1.0 + 1e-9):
            raise ValueError(f"pixels outside [0, 1]: min {px.min()}, max {px.max()}")
        object.__setattr__(self, "pixels", px)


def envelope(img: ComplexImage) -> np.ndarray:
    """Pixel-wise magnitude of the complex beamsum."""
    return np.abs(img.values)


def log_compress(
    env: np.ndarray,
    dynamic_range_db: float = 60.0,
    *,
    grid: PixelGrid,
    stage_tag: StageTag = StageTag.plane_wave_input,
) -> BModeImage:
    """Decibel mapping of an envelope onto [0, 1].

    v = clamp(20 log10(env / max(env)), -DR, 0) / DR + 1, so the envelope
    maximum maps to 1 and anything at or below -DR dB maps to 0.
    """
    if dynamic_range_db <= 0:
        raise ValueError(f"dynamic_range_db must be > 0, got {dynamic_range_db}")
    env = np.asarray(env, dtype=np.float64)
    if np.any(env < 0):
        raise ValueError("envelope must be nonnegative")
    peak = env.max() if env.size else 0.0
    if peak == 0.0:
        raise ValueError("all-zero envelope has no defined normalization")
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(env / peak)
    v = np.clip(db, -dynamic_range_db, 0.0) / dynamic_range_db + 1.0
    return BModeImage(pixels=v, grid=grid, stage_tag=stage_tag)


def _catmull_rom(t: np.ndarray) -> np.ndarray:
    """Catmull-Rom (a = -0.5) cubic kernel."""
    t = np.abs(t)
    out = np.zeros_like(t)
    near = t <= 1.0
    far = (t > 1.0) & (t < 2.0)
    out[near] = (1.5 * t[near] - 2.5) * t[near] ** 2 + 1.0
    out[far] = ((-0.5 * t[far] + 2.5) * t[far] - 4.0) * t[far] + 2.0
    return out


def _resize_weights(n_in: int, n_out: int) -> np.ndarray:
    """Dense (n_out, n_in) Catmull-Rom weight matrix with edge-clamped taps.

    Sample positions follow the pixel-center convention
    src = (dst + 0.5) * n_in / n_out - 0.5, which makes equal-size resizing
    the exact identity.
    """
    w = np.zeros((n_out, n_in), dtype=np.float64)
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    i0 = np.floor(src).astype(np.int64)
    t = src - i0
    for k in range(-1, 3):
        taps = np.clip(i0 + k, 0, n_in - 1)
        weights = _catmull_rom(k - t)
        np.add.at(w, (np.arange(n_out), taps), weights)
    return w


def bicubic_resize(img: BModeImage, out_width: int, out_height: int) -> BModeImage:
    """Separable Catmull-Rom resize; output clamped back to [0, 1]."""
    if out_width < 2 or out_height < 2:
        raise ValueError("output dimensions must be >= 2")
    wr = _resize_weights(img.grid.height, out_height)
    wc = _resize_weights(img.grid.width, out_width)
    out = wr @ np.asarray(img.pixels, dtype=np.float64) @ wc.T
    out = np.clip(out, 0.0, 1.0)
    grid = replace(img.grid, width=out_width, height=out_height)
    return BModeImage(pixels=out, grid=grid, stage_tag=img.stage_tag)


def intensity_cdf(pixels: np.ndarray) -> np.ndarray:
    """Empirical CDF of [0, 1] intensities over HIST_BINS uniform bins."""
    px = np.asarray(pixels, dtype=np.float64).ravel()
    bins = np.minimum((px * HIST_BINS).astype(np.int64), HIST_BINS - 1)
    hist = np.bincount(bins, minlength=HIST_BINS).astype(np.float64)
    cdf = np.cumsum(hist) / px.size
    cdf[-1] = 1.0
    return cdf


def histogram_match(img: BModeImage, reference) -> BModeImage:
    """Monotone remap of intensities so the image CDF tracks a reference.

    ``reference`` is either a BModeImage (its empirical CDF is used) or a
    256-entry CDF array.  Each source bin k maps to the smallest reference
    bin j with G[j] >= F[k]; matched pixels take the value j / 255.  A
    constant source image degenerates to the reference median.
    """
    if isinstance(reference, BModeImage):
        ref_px = reference.pixels
        if np.unique(np.asarray(ref_px)).size < 2:
            raise ValueError("reference image is degenerate (fewer than 2 distinct values)")
        ref_cdf = intensity_cdf(ref_px)
    else:
        ref_cdf = np.asarray(reference, dtype=np.float64)
        _check_reference_cdf(ref_cdf)

    px = np.asarray(img.pixels, dtype=np.float64)
    bins = np.minimum((px * HIST_BINS).astype(np.int64), HIST_BINS - 1)
    if np.unique(px).size < 2:
        # Degenerate source: no usable quantiles, fill with the reference median.
        j = int(np.searchsorted(ref_cdf, 0.5, side="left"))
        out = np.full_like(px, j / (HIST_BINS - 1.0))
        return BModeImage(pixels=out, grid=img.grid, stage_tag=img.stage_tag)

    src_cdf = intensity_cdf(px)
    mapping = np.searchsorted(ref_cdf, np.minimum(src_cdf, 1.0), side="left")
    mapping = np.minimum(mapping, HIST_BINS - 1) / (HIST_BINS - 1.0)
    out = mapping[bins]
    return BModeImage(pixels=out, grid=img.grid, stage_tag=img.stage_tag)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Unit-sum Gaussian taps truncated at 4 sigma."""
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    radius = max(1, int(np.ceil(4.0 * sigma)))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(t**2) / (2.0 * sigma**2))
    return k / k.sum()


def gaussian_blur(pixels: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with edge-clamped borders."""
    k = gaussian_kernel(sigma)
    out = convolve1d(np.asarray(pixels, dtype=np.float64), k, axis=0, mode="nearest")
    return convolve1d(out, k, axis=1, mode="nearest")


def unsharp_mask(img: BModeImage, sigma: float = 3.0, amount: float = 0.8) -> BModeImage:
    """Edge enhancement: img + amount * (img - blur), clamped to [0, 1]."""
    if amount < 0:
        raise ValueError(f"amount must be >= 0, got {amount}")
    px = np.asarray(img.pixels, dtype=np.float64)
    if amount == 0.0:
        out = px
    else:
        out = np.clip(px + amount * (px - gaussian_blur(px, sigma)), 0.0, 1.0)
    return BModeImage(pixels=out, grid=img.grid, stage_tag=img.stage_tag)


@dataclass(frozen=True)
class EnhanceParams:
    """Knobs of the classical path, recorded so runs are self-describing."""

    f_number: float = 0.81
    dynamic_range_db: float = 60.0
    out_width: int = 512
    out_height: int = 512
    unsharp_sigma: float = 3.0
    unsharp_amount: float = 0.8


def single_pw_image(
    frame: RFFrame, grid: PixelGrid | None = None, params: EnhanceParams | None = None
) -> BModeImage:
    """Network-input path: beamform one transmit, envelope, log, upsample."""
    grid = grid or PixelGrid()
    params = params or EnhanceParams()
    cimg = das_beamform(frame, grid, params.f_number)
    bmode = log_compress(envelope(cimg), params.dynamic_range_db, grid=grid)
    return bicubic_resize(bmode, params.out_width, params.out_height)


def compounded_image(
    frames: list[RFFrame], grid: PixelGrid | None = None, params: EnhanceParams | None = None
) -> BModeImage:
    """Coherently compound a transmit set, then envelope/log/upsample."""
    grid = grid or PixelGrid()
    params = params or EnhanceParams()
    cimgs = [das_beamform(f, grid, params.f_number) for f in frames]
    comp = compound(cimgs)
    bmode = log_compress(
        envelope(comp), params.dynamic_range_db, grid=grid, stage_tag=StageTag.compounded
    )
    return bicubic_resize(bmode, params.out_width, params.out_height)


def make_ground_truth(
    frames: list[RFFrame],
    grid: PixelGrid | None = None,
    params: EnhanceParams | None = None,
    reference_cdf: np.ndarray | None = None,
) -> BModeImage:
    """Filtered ground truth: compound, envelope, log, upsample, histogram
    match against the reference CDF, then unsharp mask."""
    params = params or EnhanceParams()
    if reference_cdf is None:
        reference_cdf = default_reference_cdf()
    img = compounded_image(frames, grid, params)
    img = histogram_match(img, reference_cdf)
    img = unsharp_mask(img, params.unsharp_sigma, params.unsharp_amount)
    return BModeImage(
        pixels=img.pixels, grid=img.grid, stage_tag=StageTag.filtered_ground_truth
    )


# ---------------------------------------------------------------------------
# Reference CDF


def _check_reference_cdf(cdf: np.ndarray) -> None:
    if cdf.shape != (HIST_BINS,):
        raise FormatError(f"reference CDF must have {HIST_BINS} entries, got {cdf.shape}")
    if np.any(np.diff(cdf) < 0):
        raise FormatError("reference CDF must be non-decreasing")
    if cdf[-1] != 1.0:
        raise FormatError(f"reference CDF must end at 1.0, got {cdf[-1]}")


def save_reference_cdf(cdf: np.ndarray, path) -> None:
    cdf = np.asarray(cdf, dtype=np.float64)
    _check_reference_cdf(cdf)
    with open(path, "wb") as fh:
        fh.write(cdf.astype("<f8").tobytes())


def load_reference_cdf(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) != HIST_BINS * 8:
        raise FormatError(
            f"reference CDF file must hold {HIST_BINS} f64 values "
            f"({HIST_BINS * 8} bytes), got {len(raw)}"
        )
    cdf = np.frombuffer(raw, dtype="<f8").copy()
    _check_reference_cdf(cdf)
    return cdf


def rayleigh_reference_cdf(
    looks: int = 3,
    dynamic_range_db: float = 60.0,
    n: int = 1 << 20,
    seed: int = 1540,
) -> np.ndarray:
    """Histogram-matching template from a multi-look speckle phantom.

    Draws the mean of ``looks`` independent Rayleigh envelopes (lowering
    speckle contrast roughly by sqrt(looks)), log-compresses against the
    99.9th percentile and returns the 256-bin CDF.  The bundled default
    template uses the defaults here.
    """
    rng = np.random.default_rng(seed)
    env = rng.rayleigh(1.0, size=(looks, n)).mean(axis=0)
    ref = np.quantile(env, 0.999)
    v = np.clip(20.0 * np.log10(env / ref), -dynamic_range_db, 0.0) / dynamic_range_db + 1.0
    return intensity_cdf(v)


def default_reference_cdf() -> np.ndarray:
    """The reference CDF bundled with the package."""
    data = resources.files("pwpipe").joinpath("data/reference_cdf.f64").read_bytes()
    cdf = np.frombuffer(data, dtype="<f8").copy()
    _check_reference_cdf(cdf)
    return cdf


# ---------------------------------------------------------------------------
# Image file formats


def save_image(img: BModeImage, path) -> None:
    """Write the PWIM raw format: magic "PWIM", u32 version, u32 width,
    u32 height, f64 lateral min/max and axial min/max, u8 stage tag, then
    width x height f32 pixels row-major."""
    g = img.grid
    header = _PWIM_HEADER.pack(
        _PWIM_MAGIC,
        _PWIM_VERSION,
        g.width,
        g.height,
        g.lateral_min,
        g.lateral_max,
        g.axial_min,
        g.axial_max,
        int(img.stage_tag),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(img.pixels, dtype="<f4").tobytes())


def load_image(path) -> BModeImage:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _PWIM_HEADER.size:
        raise FormatError(f"file too short for PWIM header: {len(raw)} bytes")
    magic, version, width, height, lat_min, lat_max, ax_min, ax_max, tag = _PWIM_HEADER.unpack_from(
        raw
    )
    if magic != _PWIM_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {_PWIM_MAGIC!r}")
    if version != _PWIM_VERSION:
        raise FormatError(f"unsupported PWIM version {version}")
    payload = raw[_PWIM_HEADER.size :]
    if len(payload) != width * height * 4:
        raise FormatError(
            f"pixel payload truncated: expected {width * height * 4} bytes, got {len(payload)}"
        )
    try:
        stage = StageTag(tag)
    except ValueError as err:
        raise FormatError(f"unknown stage tag {tag}") from err
    pixels = np.frombuffer(payload, dtype="<f4").reshape(height, width).astype(np.float32)
    grid = PixelGrid(
        lateral_min=lat_min,
        lateral_max=lat_max,
        axial_min=ax_min,
        axial_max=ax_max,
        width=width,
        height=height,
    )
    return BModeImage(pixels=pixels, grid=grid, stage_tag=stage)


def save_pgm(img: BModeImage, path) -> None:
    """8-bit binary PGM (P5) export for display."""
    data = np.clip(np.rint(np.asarray(img.pixels) * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.grid.width} {img.grid.height}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def load_pgm(path, grid: PixelGrid | None = None) -> BModeImage:
    """Read a binary P5 graymap back into a [0, 1] image.

    PGM carries no physical extents; supply ``grid`` or a unit-extent grid
    is assumed.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(b"P5"):
        raise FormatError("not a binary P5 graymap")
    # Scan exactly four header tokens; a single whitespace byte separates the
    # maxval from the binary payload, which may itself contain whitespace.
    pos, tokens = 2, []
    while len(tokens) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(raw[start:pos])
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as err:
        raise FormatError(f"non-numeric PGM header token: {err}") from err
    if maxval != 255:
        raise FormatError(f"only maxval 255 supported, got {maxval}")
    data = raw[pos + 1 : pos + 1 + width * height]
    if len(data) != width * height:
        raise FormatError(
            f"pixel payload truncated: expected {width * height} bytes, got {len(data)}"
        )
    pixels = np.frombuffer(data, dtype=np.uint8).reshape(height, width) / 255.0
    if grid is None:
        grid = PixelGrid(
            lateral_min=0.0, lateral_max=1.0, axial_min=0.0, axial_max=1.0,
            width=width, height=height,
        )
    return BModeImage(pixels=pixels, grid=grid, stage_tag=StageTag.plane_wave_input)
