"""Image-quality metrics: NRMSE, SSIM, CNR, ROI and line standard deviation.

Conventions, recorded because the choices matter for comparability:
population (N) standard deviation throughout, uniform 11x11 SSIM window
averaged over valid (fully inside) positions, line sampling by bilinear
interpolation at unit pixel spacing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .acquisition import FormatError


@dataclass(frozen=True)
class Rect:
    """Half-open pixel rectangle [row0, row1) x [col0, col1)."""

    row0: int
    col0: int
    row1: int
    col1: int

    def __post_init__(self):
        if self.row0 < 0 or self.col0 < 0 or self.row1 <= self.row0 or self.col1 <= self.col0:
            raise ValueError(f"degenerate rectangle {self}")

    @property
    def area(self) -> int:
        return (self.row1 - self.row0) * (self.col1 - self.col0)


@dataclass(frozen=True)
class Segment:
    """Line segment between two (row, col) pixel positions."""

    row0: float
    col0: float
    row1: float
    col1: float

    @property
    def length(self) -> float:
        return float(np.hypot(self.row1 - self.row0, self.col1 - self.col0))

    def __post_init__(self):
        if self.length < 1.0:
            raise ValueError("segment shorter than 1 px yields fewer than 2 unit-spaced samples")


@dataclass(frozen=True)
class RoiSet:
    speckle_box: Rect
    hyper_box: Rect
    hypo_box: Rect
    fiber_segment: Segment

    def check_bounds(self, shape: tuple[int, int]) -> None:
        h, w = shape
        for name in ("speckle_box", "hyper_box", "hypo_box"):
            r: Rect = getattr(self, name)
            if r.row1 > h or r.col1 > w:
                raise ValueError(f"{name} {r} exceeds image bounds {h}x{w}")
        s = self.fiber_segment
        for rr, cc in ((s.row0, s.col0), (s.row1, s.col1)):
            if not (0 <= rr <= h - 1 and 0 <= cc <= w - 1):
                raise ValueError(f"fiber_segment endpoint ({rr}, {cc}) outside {h}x{w}")


def _img(x) -> np.ndarray:
    a = np.asarray(getattr(x, "pixels", x), dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {a.shape}")
    return a


def nrmse(img, ground_truth) -> float:
    """L2 error normalized by the L2 norm of the ground truth."""
    a, g = _img(img), _img(ground_truth)
    if a.shape != g.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {g.shape}")
    denom = np.linalg.norm(g)
    if denom == 0.0:
        raise ValueError("ground truth has zero norm")
    return float(np.linalg.norm(a - g) / denom)


def _box_sums(x: np.ndarray, win: int) -> np.ndarray:
    """Sliding-window sums over all valid win x win positions via an
    integral image."""
    s = np.zeros((x.shape[0] + 1, x.shape[1] + 1), dtype=np.float64)
    s[1:, 1:] = np.cumsum(np.cumsum(x, axis=0), axis=1)
    return (
        s[win:, win:] - s[:-win, win:] - s[win:, :-win] + s[:-win, :-win]
    )


def ssim(
    img,
    ground_truth,
    window: int = 11,
    k1: float = 0.01,
    k2: float = 0.03,
    L: float = 1.0,
) -> float:
    """Mean local structural similarity over valid uniform windows."""
    a, g = _img(img), _img(ground_truth)
    if a.shape != g.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {g.shape}")
    if min(a.shape) < window:
        raise ValueError(f"image {a.shape} smaller than the {window}x{window} window")
    n = float(window * window)
    mu_a = _box_sums(a, window) / n
    mu_g = _box_sums(g, window) / n
    # population (co)variances from raw second moments
    var_a = _box_sums(a * a, window) / n - mu_a * mu_a
    var_g = _box_sums(g * g, window) / n - mu_g * mu_g
    cov = _box_sums(a * g, window) / n - mu_a * mu_g
    c1 = (k1 * L) ** 2
    c2 = (k2 * L) ** 2
    num = (2.0 * mu_a * mu_g + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_g * mu_g + c1) * (var_a + var_g + c2)
    return float(np.mean(num / den))


def roi_std(img, box: Rect) -> float:
    """Population standard deviation inside a rectangle."""
    a = _img(img)
    if box.row1 > a.shape[0] or box.col1 > a.shape[1]:
        raise ValueError(f"box {box} exceeds image bounds {a.shape}")
    if box.area < 2:
        raise ValueError(f"box {box} has fewer than 2 pixels")
    return float(np.std(a[box.row0 : box.row1, box.col0 : box.col1]))


def roi_mean(img, box: Rect) -> float:
    a = _img(img)
    if box.row1 > a.shape[0] or box.col1 > a.shape[1]:
        raise ValueError(f"box {box} exceeds image bounds {a.shape}")
    return float(np.mean(a[box.row0 : box.row1, box.col0 : box.col1]))


def cnr(img, rois: RoiSet) -> float:
    """(mean(hyper) - mean(hypo)) / ((std(hypo) + std(hyper)) / 2)."""
    a = _img(img)
    rois.check_bounds(a.shape)
    mu1 = roi_mean(a, rois.hypo_box)
    mu2 = roi_mean(a, rois.hyper_box)
    s1 = roi_std(a, rois.hypo_box)
    s2 = roi_std(a, rois.hyper_box)
    if s1 + s2 == 0.0:
        raise ValueError("both regions have zero variance; CNR undefined")
    return (mu2 - mu1) / ((s1 + s2) / 2.0)


def bilinear_sample(img: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    a = _img(img)
    r0 = np.clip(np.floor(rows).astype(np.int64), 0, a.shape[0] - 2)
    c0 = np.clip(np.floor(cols).astype(np.int64), 0, a.shape[1] - 2)
    fr = rows - r0
    fc = cols - c0
    return (
        a[r0, c0] * (1 - fr) * (1 - fc)
        + a[r0 + 1, c0] * fr * (1 - fc)
        + a[r0, c0 + 1] * (1 - fr) * fc
        + a[r0 + 1, c0 + 1] * fr * fc
    )


def line_std(img, segment: Segment) -> float:
    """Population standard deviation of bilinear samples taken at unit
    spacing along the segment, starting at its first endpoint."""
    a = _img(img)
    length = segment.length
    count = int(np.floor(length)) + 1
    t = np.arange(count) / length
    rows = segment.row0 + t * (segment.row1 - segment.row0)
    cols = segment.col0 + t * (segment.col1 - segment.col0)
    if rows.min() < 0 or cols.min() < 0 or rows.max() > a.shape[0] - 1 or cols.max() > a.shape[1] - 1:
        raise ValueError("segment leaves the image bounds")
    return float(np.std(bilinear_sample(a, rows, cols)))


# ---------------------------------------------------------------------------
# RoiSet file format: key = value lines with comma-separated integers


_ROI_KEYS = ("speckle_box", "hyper_box", "hypo_box", "fiber_segment")


def save_rois(rois: RoiSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# region-of-interest definitions, pixel coordinates\n")
        fh.write("# boxes: row0,col0,row1,col1 half-open; segment: row0,col0,row1,col1\n")
        for name in _ROI_KEYS[:3]:
            r: Rect = getattr(rois, name)
            fh.write(f"{name} = {r.row0},{r.col0},{r.row1},{r.col1}\n")
        s = rois.fiber_segment
        fh.write(f"fiber_segment = {s.row0:g},{s.col0:g},{s.row1:g},{s.col1:g}\n")


def load_rois(path) -> RoiSet:
    values: dict[str, list[float]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, rest = line.partition("=")
            if not sep:
                raise FormatError(f"line {lineno}: expected 'key = value', got {line!r}")
            key = key.strip()
            try:
                nums = [float(tok) for tok in rest.strip().split(",")]
            except ValueError as err:
                raise FormatError(f"line {lineno}: {err}") from err
            if key not in _ROI_KEYS:
                raise FormatError(f"line {lineno}: unknown ROI key {key!r}")
            if len(nums) != 4:
                raise FormatError(f"line {lineno}: {key} needs 4 numbers, got {len(nums)}")
            values[key] = nums
    missing = [k for k in _ROI_KEYS if k not in values]
    if missing:
        raise FormatError(f"missing ROI keys: {', '.join(missing)}")
    boxes = {k: Rect(*(int(v) for v in values[k])) for k in _ROI_KEYS[:3]}
    return RoiSet(
        speckle_box=boxes["speckle_box"],
        hyper_box=boxes["hyper_box"],
        hypo_box=boxes["hypo_box"],
        fiber_segment=Segment(*values["fiber_segment"]),
    )
