import numpy as np
import pytest

from cate_fusion.models import PseudoOutcomePanel, StudyDataset
from cate_fusion.simulation import generate_dataset


def build_panel(z, v, psi, omega=None):
    """Panel with psi placed in psi_r for trial records and psi_o for OS records."""
    z = np.asarray(z, dtype=np.int8)
    psi = np.asarray(psi, dtype=float)
    trial = z == 0
    return PseudoOutcomePanel(
        z=z,
        v=np.asarray(v, dtype=float),
        psi_r=np.where(trial, psi, np.nan),
        psi_o=np.where(trial, np.nan, psi),
        omega=np.ones(z.size) if omega is None else np.asarray(omega, dtype=float),
    )


@pytest.fixture
def make_panel():
    return build_panel


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def random_panel(rng):
    def build(n=40, d=1):
        z = (rng.random(n) < 0.5).astype(np.int8)
        z[0], z[1] = 0, 1
        return build_panel(
            z,
            rng.random((n, d)),
            rng.normal(size=n),
            omega=np.exp(rng.normal(scale=0.5, size=n)),
        )

    return build


@pytest.fixture
def small_dataset():
    return StudyDataset(
        z=[0, 0, 0, 0, 1, 1, 1, 1, 1, 1],
        t=[0, 1, 0, 1, 0, 1, 1, 0, 1, 0],
        y=[1.0, 2.5, 0.5, 3.0, 1.5, 2.0, 2.2, 0.8, 3.1, 1.1],
        x=[[0.1], [0.4], [-0.3], [0.9], [1.2], [-0.7], [0.2], [0.5], [-1.1], [0.8]],
    )


@pytest.fixture(scope="session")
def correct_data():
    return generate_dataset(4000, "correct", seed=11)


@pytest.fixture(scope="session")
def correct_valid():
    return generate_dataset(4000, "correct", seed=12)
