import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from spinchain.bath import SpectralDensity
from spinchain.model import ChainConfig, CouplingSpec, SpinBosonUnit, SpinParams

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

REF_BATH = dict(omega_c=2.5, omega_max=10.0)


def make_unit(eps=1.0, delta=1.0, xi=0.2, n_modes=100, beta=5.0, state=(1.0, 0.0)):
    return SpinBosonUnit(SpinParams(eps, delta), SpectralDensity(xi, 2.5, 10.0, n_modes), beta,
                         state)


def make_chain(k, coupling, **unit_kw):
    unit = make_unit(**unit_kw)
    return ChainConfig([unit] * k, [coupling] * (k - 1))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def ising():
    return CouplingSpec.heisenberg(jz=0.04)


@pytest.fixture
def frenkel():
    return CouplingSpec.heisenberg(jx=0.1, jy=0.1)
