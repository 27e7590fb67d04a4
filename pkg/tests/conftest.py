import numpy as np
import pytest
from hypothesis import settings

from nilhomog.lagrangian import FourierPotential, kinetic, mechanical
from nilhomog.mane import DiscretizationSpec

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture(scope="session")
def cosine():
    return FourierPotential.cosine(1)


@pytest.fixture(scope="session")
def kin():
    return kinetic(1, a_max=4.0)


@pytest.fixture(scope="session")
def mech(cosine):
    return mechanical(cosine, 1, a_max=4.0)


@pytest.fixture(scope="session")
def mech_norm(mech):
    return mech.shifted(1.0)


@pytest.fixture(scope="session")
def spec():
    return DiscretizationSpec(h_x=0.05, h_t=0.1, h_v=0.01, r_box=10.0)


@pytest.fixture(scope="session")
def fine_spec():
    return DiscretizationSpec(h_x=0.01, h_t=0.025, h_v=0.005, r_box=3.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def mech_beta(mech, spec):
    from nilhomog.homogenize import default_beta

    return default_beta(mech, spec)


@pytest.fixture(scope="session")
def kin_beta(kin, spec):
    from nilhomog.effective import sample_beta

    return sample_beta(kin, np.arange(-8, 9) * 0.25, (4.0, 8.0, 16.0), spec)
