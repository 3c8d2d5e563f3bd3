"""Synthetic RF acquisition for plane-wave transmits.

Point-scatterer phantoms are insonified by a steered plane wave and echoed
back to a linear array.  Each scatterer contributes a Gaussian-enveloped
cosine pulse at the analytic two-way travel time, so every downstream stage
(beamforming, compounding, envelope detection) can be checked against closed
forms.  The module also owns the PWRF channel-data file format.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

# Pulse contributions are evaluated on a window of +/- PULSE_TAIL_SIGMAS
# Gaussian widths around the arrival time; beyond that the envelope is below
# 1.6e-8 and is treated as zero.  The cutoff is per-scatterer, so linearity
# over scatterers is preserved exactly.
PULSE_TAIL_SIGMAS = 6.0

_PWRF_MAGIC = b"PWRF"
_PWRF_VERSION = 1
_PWRF_HEADER = struct.Struct("<4sIII6d")


class FormatError(ValueError):
    """Raised when a binary file does not match its declared layout."""


@dataclass(frozen=True)
class TransducerGeometry:
    """Linear-array geometry and transmit pulse parameters.

    Elements are centered on the lateral axis at depth 0, spaced by
    ``pitch``.  ``pulse_cycles`` sets the Gaussian envelope width of the
    transmit pulse (sigma = pulse_cycles / (2 * center_frequency)).
    """

    element_count: int = 128
    pitch: float = 0.298e-3
    center_frequency: float = 5.208e6
    sampling_frequency: float = 20.832e6
    sound_speed: float = 1540.0
    pulse_cycles: float = 2.0

    def __post_init__(self):
        if self.element_count < 2:
            raise ValueError(f"element_count must be >= 2, got {self.element_count}")
        if self.pitch <= 0:
            raise ValueError(f"pitch must be > 0, got {self.pitch}")
        if self.sampling_frequency < 4.0 * self.center_frequency:
            raise ValueError(
                "sampling_frequency must be >= 4x center_frequency "
                f"({self.sampling_frequency} < 4 * {self.center_frequency})"
            )
        if self.sound_speed <= 0:
            raise ValueError(f"sound_speed must be > 0, got {self.sound_speed}")

    @property
    def element_positions(self) -> np.ndarray:
        """Lateral element coordinates in meters, centered on x = 0."""
        idx = np.arange(self.element_count, dtype=np.float64)
        return (idx - (self.element_count - 1) / 2.0) * self.pitch

    @property
    def wavelength(self) -> float:
        return self.sound_speed / self.center_frequency

    @property
    def pulse_sigma(self) -> float:
        """Gaussian envelope width of the transmit pulse in seconds."""
        return self.pulse_cycles / (2.0 * self.center_frequency)


@dataclass(frozen=True)
class ScattererField:
    """Point scatterers: positions (n, 2) as (lateral, axial) meters."""

    positions: np.ndarray
    reflectivities: np.ndarray

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=np.float64))
        refl = np.atleast_1d(np.asarray(self.reflectivities, dtype=np.float64))
        if pos.size == 0:
            pos = pos.reshape(0, 2)
        if pos.shape[1] != 2:
            raise ValueError(f"positions must be (n, 2), got {pos.shape}")
        if pos.shape[0] != refl.shape[0]:
            raise ValueError(
                f"positions and reflectivities lengths differ: "
                f"{pos.shape[0]} vs {refl.shape[0]}"
            )
        if pos.shape[0] and np.any(pos[:, 1] <= 0):
            raise ValueError("all axial positions must be > 0 (scatterer behind array)")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "reflectivities", refl)

    def __len__(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class RFFrame:
    """Per-element, per-sample echo data for one plane-wave transmit."""

    samples: np.ndarray  # (element_count, sample_count)
    steer_angle: float
    geometry: TransducerGeometry
    t0: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if samples.ndim != 2:
            raise ValueError(f"samples must be 2-D, got shape {samples.shape}")
        if samples.shape[0] != self.geometry.element_count:
            raise ValueError(
                f"samples has {samples.shape[0]} rows but geometry declares "
                f"{self.geometry.element_count} elements"
            )
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples contain non-finite values")
        object.__setattr__(self, "samples", samples)

    @property
    def sample_count(self) -> int:
        return self.samples.shape[1]

    @property
    def times(self) -> np.ndarray:
        """Sample time stamps in seconds."""
        return self.t0 + np.arange(self.sample_count) / self.geometry.sampling_frequency


def arrival_times(
    geometry: TransducerGeometry, field: ScattererField, steer_angle: float
) -> np.ndarray:
    """Two-way travel times, shape (n_scatterers, n_elements).

    tau = (z cos(theta) + x sin(theta) + sqrt((x - x_e)^2 + z^2)) / c
    """
    x = field.positions[:, 0:1]
    z = field.positions[:, 1:2]
    xe = geometry.element_positions[None, :]
    tx_path = z * np.cos(steer_angle) + x * np.sin(steer_angle)
    rx_path = np.sqrt((x - xe) ** 2 + z**2)
    return (tx_path + rx_path) / geometry.sound_speed


def simulate_rf(
    geometry: TransducerGeometry,
    field: ScattererField,
    steer_angle: float = 0.0,
    *,
    duration: float | None = None,
    noise_std: float = 0.0,
    seed=None,
) -> RFFrame:
    """Simulate one plane-wave transmit over a point-scatterer field.

    Each scatterer at (x, z) with reflectivity a contributes
    ``a * cos(2 pi f0 (t - tau)) * exp(-(t - tau)^2 / (2 sigma^2))`` to every
    element, where tau is the plane-wave transmit delay plus the element
    return path.  Contributions sum linearly.

    Parameters
    ----------
    duration : float, optional
        Recording window in seconds (t0 = 0).  Defaults to the latest
        arrival plus the pulse tail.
    noise_std : float
        Standard deviation of additive white Gaussian noise (0 disables).
    seed : int, optional
        RNG seed for the noise draw.
    """
    if abs(steer_angle) >= np.deg2rad(30.0):
        raise ValueError(f"|steer_angle| must be < 30 deg, got {np.rad2deg(steer_angle):.1f} deg")

    fs = geometry.sampling_frequency
    f0 = geometry.center_frequency
    sigma = geometry.pulse_sigma
    tail = PULSE_TAIL_SIGMAS * sigma

    if len(field):
        tau = arrival_times(geometry, field, steer_angle)
        t_end = float(tau.max()) + tail
    else:
        tau = np.zeros((0, geometry.element_count))
        t_end = 32.0 / fs
    if duration is not None:
        t_end = float(duration)
    n_samples = int(np.ceil(t_end * fs)) + 1

    samples = np.zeros((geometry.element_count, n_samples), dtype=np.float64)
    if len(field):
        window = int(np.ceil(2.0 * tail * fs)) + 2
        offsets = np.arange(window)
        for s in range(len(field)):
            amp = field.reflectivities[s]
            tau_s = tau[s]  # (n_elements,)
            i_lo = np.ceil((tau_s - tail) * fs).astype(np.int64)
            idx = i_lo[:, None] + offsets[None, :]  # (n_el, window)
            dt = idx / fs - tau_s[:, None]
            pulse = amp * np.cos(2.0 * np.pi * f0 * dt) * np.exp(-(dt**2) / (2.0 * sigma**2))
            valid = (idx >= 0) & (idx < n_samples) & (np.abs(dt) <= tail)
            rows = np.broadcast_to(
                np.arange(geometry.element_count)[:, None], idx.shape
            )
            np.add.at(samples, (rows[valid], idx[valid]), pulse[valid])

    if noise_std > 0.0:
        rng = np.random.default_rng(seed)
        samples = samples + rng.normal(0.0, noise_std, samples.shape)

    return RFFrame(samples=samples, steer_angle=float(steer_angle), geometry=geometry, t0=0.0)


def simulate_compound_set(
    geometry: TransducerGeometry,
    field: ScattererField,
    angles_deg: tuple[float, ...] = (-3.0, 0.0, 3.0),
    repeats: int = 4,
    *,
    duration: float | None = None,
    noise_std: float = 0.0,
    seed: int | None = None,
) -> list[RFFrame]:
    """Transmit set for compounding: ``repeats`` firings per steer angle.

    With noise enabled every transmit gets an independent noise draw, which
    is what makes the repeats worth averaging.  Without noise the repeats of
    one angle are identical and only the angles are simulated.
    """
    frames: list[RFFrame] = []
    if duration is None and len(field):
        worst = max(
            float(arrival_times(geometry, field, np.deg2rad(a)).max()) for a in angles_deg
        )
        duration = worst + PULSE_TAIL_SIGMAS * geometry.pulse_sigma
    seq = np.random.SeedSequence(seed).spawn(len(angles_deg) * repeats)
    k = 0
    for angle in angles_deg:
        clean = None
        for _ in range(repeats):
            if noise_std > 0.0:
                frames.append(
                    simulate_rf(
                        geometry,
                        field,
                        np.deg2rad(angle),
                        duration=duration,
                        noise_std=noise_std,
                        seed=seq[k],
                    )
                )
            else:
                if clean is None:
                    clean = simulate_rf(geometry, field, np.deg2rad(angle), duration=duration)
                frames.append(clean)
            k += 1
    return frames


def save_rf(frame: RFFrame, path) -> None:
    """Write an RFFrame in the PWRF format (little-endian, f32 samples).

    Layout: magic "PWRF", u32 version, u32 element_count, u32 sample_count,
    f64 pitch, f64 center_frequency, f64 sampling_frequency, f64 sound_speed,
    f64 steer_angle, f64 t0, then element_count x sample_count f32 samples,
    row-major by element.  Samples are stored as f32; the transmit pulse
    length is not part of the receive-side format.
    """
    g = frame.geometry
    header = _PWRF_HEADER.pack(
        _PWRF_MAGIC,
        _PWRF_VERSION,
        g.element_count,
        frame.sample_count,
        g.pitch,
        g.center_frequency,
        g.sampling_frequency,
        g.sound_speed,
        frame.steer_angle,
        frame.t0,
    )
    data = np.ascontiguousarray(frame.samples, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())


def load_rf(path, pulse_cycles: float = 2.0) -> RFFrame:
    """Read a PWRF file; see :func:`save_rf` for the layout.

    ``pulse_cycles`` is a transmit-model parameter not carried by the file
    and is filled in on the reconstructed geometry.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _PWRF_HEADER.size:
        raise FormatError(f"file too short for PWRF header: {len(raw)} bytes")
    (
        magic,
        version,
        element_count,
        sample_count,
        pitch,
        f0,
        fs,
        c,
        steer_angle,
        t0,
    ) = _PWRF_HEADER.unpack_from(raw)
    if magic != _PWRF_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {_PWRF_MAGIC!r}")
    if version != _PWRF_VERSION:
        raise FormatError(f"unsupported PWRF version {version}")
    expected = element_count * sample_count * 4
    payload = raw[_PWRF_HEADER.size :]
    if len(payload) != expected:
        raise FormatError(
            f"sample payload truncated: header declares {element_count}x{sample_count} "
            f"f32 samples ({expected} bytes) but file holds {len(payload)}"
        )
    samples = np.frombuffer(payload, dtype="<f4").reshape(element_count, sample_count)
    geometry = TransducerGeometry(
        element_count=element_count,
        pitch=pitch,
        center_frequency=f0,
        sampling_frequency=fs,
        sound_speed=c,
        pulse_cycles=pulse_cycles,
    )
    return RFFrame(
        samples=samples.astype(np.float32), steer_angle=steer_angle, geometry=geometry, t0=t0
    )
