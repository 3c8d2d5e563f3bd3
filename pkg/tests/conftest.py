import numpy as np
import pytest

from pwpipe.acquisition import ScattererField, TransducerGeometry, simulate_compound_set


def lesion_phantom(seed: int, n: int = 2000) -> ScattererField:
    """Speckle field with a hypoechoic disk at (-5, 20) mm and a
    hyperechoic disk at (+5, 20) mm, both 4 mm radius."""
    rng = np.random.default_rng(seed)
    pos = np.column_stack([
        rng.uniform(-0.02, 0.02, n),
        rng.uniform(1e-3, 0.04, n),
    ])
    refl = rng.rayleigh(1.0, n)
    hypo = np.hypot(pos[:, 0] + 0.005, pos[:, 1] - 0.02) < 0.004
    hyper = np.hypot(pos[:, 0] - 0.005, pos[:, 1] - 0.02) < 0.004
    refl = np.where(hypo, refl * 0.1, refl)
    refl = np.where(hyper, refl * 3.0, refl)
    return ScattererField(positions=pos, reflectivities=refl)


@pytest.fixture(scope="session")
def geometry():
    return TransducerGeometry()


@pytest.fixture(scope="session")
def point_frames(geometry):
    """12-transmit compound set (4 repeats x 3 angles) for a single point
    scatterer at (0, 20 mm), noise-free."""
    field = ScattererField(positions=np.array([[0.0, 0.02]]), reflectivities=np.array([1.0]))
    return simulate_compound_set(geometry, field, seed=0)


@pytest.fixture(scope="session")
def speckle_frames(geometry):
    """12-transmit compound set for one lesion phantom with receiver noise."""
    return simulate_compound_set(geometry, lesion_phantom(seed=0), noise_std=0.05, seed=0)
