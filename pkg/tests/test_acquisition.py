import numpy as np
import pytest

from pwpipe.acquisition import (
    FormatError,
    RFFrame,
    ScattererField,
    TransducerGeometry,
    arrival_times,
    load_rf,
    save_rf,
    simulate_compound_set,
    simulate_rf,
)


def test_arrival_time_matches_hand_computation(geometry):
    # Point at (0, 20 mm), element at x_e, zero steer:
    # tau = (z + sqrt(x_e^2 + z^2)) / c, evaluated by hand for two elements.
    field = ScattererField(positions=np.array([[0.0, 0.02]]), reflectivities=np.array([1.0]))
    tau = arrival_times(geometry, field, 0.0)
    xe = geometry.element_positions
    # innermost element (x_e = pitch/2 = 0.149 mm)
    inner = int(np.argmin(np.abs(xe)))
    by_hand = (0.02 + np.sqrt(0.000149**2 + 0.02**2)) / 1540.0
    assert tau[0, inner] == pytest.approx(by_hand, abs=1e-12)
    assert by_hand == pytest.approx(2.5974386e-5, abs=1e-11)
    # outermost element
    outer = int(np.argmax(np.abs(xe)))
    by_hand_outer = (0.02 + np.hypot(xe[outer], 0.02)) / 1540.0
    assert tau[0, outer] == pytest.approx(by_hand_outer, abs=1e-15)


def test_arrival_time_with_steer(geometry):
    # Steered transmit adds z cos(theta) + x sin(theta) on the way out.
    field = ScattererField(positions=np.array([[0.01, 0.03]]), reflectivities=np.array([1.0]))
    th = np.deg2rad(3.0)
    tau = arrival_times(geometry, field, th)
    xe = geometry.element_positions
    expect = (0.03 * np.cos(th) + 0.01 * np.sin(th) + np.hypot(0.01 - xe, 0.03)) / 1540.0
    np.testing.assert_allclose(tau[0], expect, rtol=0, atol=1e-15)


def test_pulse_peaks_at_arrival_time(geometry):
    field = ScattererField(positions=np.array([[0.0, 0.02]]), reflectivities=np.array([1.0]))
    frame = simulate_rf(geometry, field, 0.0)
    tau = arrival_times(geometry, field, 0.0)[0]
    env_peak = np.abs(frame.samples).argmax(axis=1)
    # cos * Gaussian peaks within one carrier half-cycle of tau
    fs = geometry.sampling_frequency
    half_cycle = fs / (2.0 * geometry.center_frequency)
    assert np.all(np.abs(env_peak - tau * fs) <= half_cycle + 1.0)


def test_superposition_of_scatterer_fields(geometry):
    rng = np.random.default_rng(3)
    pos = np.column_stack([rng.uniform(-0.01, 0.01, 6), rng.uniform(0.005, 0.03, 6)])
    refl = rng.uniform(0.5, 2.0, 6)
    both = ScattererField(positions=pos, reflectivities=refl)
    a = ScattererField(positions=pos[:3], reflectivities=refl[:3])
    b = ScattererField(positions=pos[3:], reflectivities=refl[3:])
    dur = float(arrival_times(geometry, both, 0.0).max()) + 1e-6
    f_both = simulate_rf(geometry, both, 0.0, duration=dur)
    f_a = simulate_rf(geometry, a, 0.0, duration=dur)
    f_b = simulate_rf(geometry, b, 0.0, duration=dur)
    lhs = f_both.samples
    rhs = f_a.samples + f_b.samples
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(lhs)))


def test_reflectivity_scales_linearly(geometry):
    field1 = ScattererField(positions=np.array([[0.0, 0.015]]), reflectivities=np.array([1.0]))
    field3 = ScattererField(positions=np.array([[0.0, 0.015]]), reflectivities=np.array([3.0]))
    f1 = simulate_rf(geometry, field1, 0.0)
    f3 = simulate_rf(geometry, field3, 0.0)
    np.testing.assert_allclose(f3.samples, 3.0 * f1.samples, rtol=0, atol=1e-14)


def test_noise_seed_reproducible(geometry):
    field = ScattererField(positions=np.array([[0.0, 0.01]]), reflectivities=np.array([1.0]))
    a = simulate_rf(geometry, field, 0.0, noise_std=0.1, seed=7)
    b = simulate_rf(geometry, field, 0.0, noise_std=0.1, seed=7)
    c = simulate_rf(geometry, field, 0.0, noise_std=0.1, seed=8)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


def test_compound_set_layout(point_frames, geometry):
    assert len(point_frames) == 12
    angles = [f.steer_angle for f in point_frames]
    expect = np.deg2rad(np.repeat([-3.0, 0.0, 3.0], 4))
    np.testing.assert_allclose(angles, expect, atol=1e-15)
    # shared recording window so frames are summable
    counts = {f.sample_count for f in point_frames}
    assert len(counts) == 1
    # noise-free repeats of the same angle are identical
    assert np.array_equal(point_frames[0].samples, point_frames[1].samples)


def test_compound_set_noise_independent(speckle_frames):
    assert not np.array_equal(speckle_frames[0].samples, speckle_frames[1].samples)


def test_steer_angle_limit(geometry):
    field = ScattererField(positions=np.array([[0.0, 0.01]]), reflectivities=np.array([1.0]))
    with pytest.raises(ValueError):
        simulate_rf(geometry, field, np.deg2rad(31.0))


def test_scatterer_field_validation():
    with pytest.raises(ValueError):
        ScattererField(positions=np.array([[0.0, -0.01]]), reflectivities=np.array([1.0]))
    with pytest.raises(ValueError):
        ScattererField(positions=np.zeros((2, 2)) + 0.01, reflectivities=np.array([1.0]))
    with pytest.raises(ValueError):
        ScattererField(positions=np.zeros((1, 3)), reflectivities=np.array([1.0]))


def test_geometry_validation():
    with pytest.raises(ValueError):
        TransducerGeometry(element_count=1)
    with pytest.raises(ValueError):
        TransducerGeometry(sampling_frequency=10e6)  # under 4x carrier
    with pytest.raises(ValueError):
        TransducerGeometry(pitch=0.0)


def test_rf_frame_validation(geometry):
    with pytest.raises(ValueError):
        RFFrame(samples=np.zeros((3, 10)), steer_angle=0.0, geometry=geometry)
    bad = np.zeros((128, 10))
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        RFFrame(samples=bad, steer_angle=0.0, geometry=geometry)


def test_rf_round_trip(tmp_path, geometry):
    field = ScattererField(positions=np.array([[0.002, 0.012]]), reflectivities=np.array([1.5]))
    frame = simulate_rf(geometry, field, np.deg2rad(-3.0), noise_std=0.02, seed=1)
    path = tmp_path / "frame.pwrf"
    save_rf(frame, path)
    back = load_rf(path)
    # storage is f32; a second trip is bit exact
    np.testing.assert_array_equal(back.samples, frame.samples.astype(np.float32))
    assert back.steer_angle == frame.steer_angle
    assert back.t0 == frame.t0
    g = back.geometry
    assert (g.element_count, g.pitch, g.center_frequency) == (
        geometry.element_count, geometry.pitch, geometry.center_frequency)
    save_rf(back, path)
    again = load_rf(path)
    assert np.array_equal(again.samples, back.samples)


def test_rf_load_rejects_bad_files(tmp_path, geometry):
    field = ScattererField(positions=np.array([[0.0, 0.01]]), reflectivities=np.array([1.0]))
    frame = simulate_rf(geometry, field, 0.0)
    path = tmp_path / "frame.pwrf"
    save_rf(frame, path)
    raw = path.read_bytes()

    (tmp_path / "short.pwrf").write_bytes(raw[:20])
    with pytest.raises(FormatError):
        load_rf(tmp_path / "short.pwrf")

    (tmp_path / "magic.pwrf").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError):
        load_rf(tmp_path / "magic.pwrf")

    (tmp_path / "trunc.pwrf").write_bytes(raw[:-9])
    with pytest.raises(FormatError):
        load_rf(tmp_path / "trunc.pwrf")
