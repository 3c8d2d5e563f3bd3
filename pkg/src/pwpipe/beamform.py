"""Delay-and-sum plane-wave beamforming and coherent compounding.

The beamformer reconstructs a complex (pre-envelope) image on a pixel grid
from one plane-wave transmit: each pixel sums the analytic channel signals
sampled at the plane-wave transmit delay plus the per-element return delay,
restricted to the elements inside the depth-dependent receive aperture.
Compounding averages the complex images of several steered transmits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import hilbert

from .acquisition import RFFrame


@dataclass(frozen=True)
class PixelGrid:
    """Reconstruction grid; coordinates are pixel centers, endpoints included."""

    lateral_min: float = -0.02
    lateral_max: float = 0.02
    axial_min: float = 0.0
    axial_max: float = 0.04
    width: int = 97
    height: int = 191

    def __post_init__(self):
        if self.lateral_max <= self.lateral_min:
            raise ValueError("lateral_max must exceed lateral_min")
        if self.axial_max <= self.axial_min:
            raise ValueError("axial_max must exceed axial_min")
        if self.width < 2 or self.height < 2:
            raise ValueError("grid must be at least 2x2 pixels")

    @property
    def lateral(self) -> np.ndarray:
        return np.linspace(self.lateral_min, self.lateral_max, self.width)

    @property
    def axial(self) -> np.ndarray:
        return np.linspace(self.axial_min, self.axial_max, self.height)


@dataclass(frozen=True)
class ComplexImage:
    """Pre-envelope complex beamsum on a grid; values indexed [axial, lateral]."""

    values: np.ndarray
    grid: PixelGrid
    steer_angle: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.shape != (self.grid.height, self.grid.width):
            raise ValueError(
                f"values shape {values.shape} does not match grid "
                f"({self.grid.height}, {self.grid.width})"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("values contain non-finite entries")
        object.__setattr__(self, "values", values)


def aperture_mask(
    lateral: np.ndarray, depth: float, element_positions: np.ndarray, f_number: float
) -> np.ndarray:
    """Receive-aperture mask, shape (n_pixels, n_elements).

    An element contributes to a pixel when its lateral offset from the pixel
    is at most depth / (2 * f_number), i.e. the active aperture width equals
    depth / f_number (rectangular apodization).
    """
    half = depth / (2.0 * f_number)
    return np.abs(lateral[:, None] - element_positions[None, :]) <= half


def das_beamform(frame: RFFrame, grid: PixelGrid, f_number: float = 0.81) -> ComplexImage:
    """Dynamic-receive-focus delay-and-sum of one plane-wave transmit.

    Channel signals are made analytic with a discrete Hilbert transform and
    sampled with linear interpolation at

        tau(x, z, e) = (z cos(theta) + x sin(theta)) / c
                       + sqrt((x - x_e)^2 + z^2) / c.

    Pixels whose delays fall outside the recorded window receive zero from
    the affected elements (not an error).
    """
    if f_number <= 0:
        raise ValueError(f"f_number must be > 0, got {f_number}")

    g = frame.geometry
    fs = g.sampling_frequency
    c = g.sound_speed
    theta = frame.steer_angle
    xe = g.element_positions
    n_samples = frame.sample_count

    analytic = hilbert(np.asarray(frame.samples, dtype=np.float64), axis=1)

    lat = grid.lateral
    out = np.zeros((grid.height, grid.width), dtype=np.complex128)
    tau_tx_lat = lat * np.sin(theta) / c  # (w,)
    dx2 = (lat[:, None] - xe[None, :]) ** 2  # (w, n_el)
    el_idx = np.arange(g.element_count)

    for iz, z in enumerate(grid.axial):
        tau = z * np.cos(theta) / c + tau_tx_lat[:, None] + np.sqrt(dx2 + z * z) / c
        pos = (tau - frame.t0) * fs
        i0 = np.floor(pos).astype(np.int64)
        frac = pos - i0
        valid = (i0 >= 0) & (i0 < n_samples - 1)
        valid &= aperture_mask(lat, z, xe, f_number)
        i0c = np.clip(i0, 0, n_samples - 2)
        rows = np.broadcast_to(el_idx[None, :], i0c.shape)
        s0 = analytic[rows, i0c]
        s1 = analytic[rows, i0c + 1]
        contrib = np.where(valid, (1.0 - frac) * s0 + frac * s1, 0.0)
        out[iz, :] = contrib.sum(axis=1)

    return ComplexImage(values=out, grid=grid, steer_angle=theta)


def compound(images: list[ComplexImage]) -> ComplexImage:
    """Pixel-wise complex mean of beamformed images on an identical grid."""
    if not images:
        raise ValueError("compound requires at least one image")
    grid = images[0].grid
    for im in images[1:]:
        if im.grid != grid:
            raise ValueError(f"grid mismatch: {im.grid} vs {grid}")
    stack = np.stack([im.values for im in images], axis=0)
    return ComplexImage(values=stack.mean(axis=0), grid=grid, steer_angle=0.0)
