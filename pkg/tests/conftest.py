import numpy as np
import pytest

from shadowpse.gamma_solver import GammaOptions, fit_gamma
from shadowpse.sieve_basis import build_spec_bundle
from shadowpse.simulation import DgpConfig, generate

from support import seq


@pytest.fixture(scope="session")
def pair2000():
    """(full, observed) benchmark draw at n=2000 shared across modules."""
    return generate(DgpConfig(n=2000, seed=seq(1)))


@pytest.fixture(scope="session")
def obs2000(pair2000):
    return pair2000[1]


@pytest.fixture(scope="session")
def full2000(pair2000):
    return pair2000[0]


@pytest.fixture(scope="session")
def comp2000(full2000):
    return full2000.with_r_set_to_one()


@pytest.fixture(scope="session")
def bundle2000(obs2000):
    return build_spec_bundle(obs2000)


@pytest.fixture(scope="session")
def gamma2000(obs2000, bundle2000):
    """Fitted odds model and report on the shared n=2000 draw."""
    return fit_gamma(obs2000, bundle2000.q, bundle2000.p, GammaOptions())


@pytest.fixture(scope="session")
def comp600(comp2000):
    return comp2000.subset(np.arange(comp2000.n) < 600)


@pytest.fixture(scope="session")
def obs600(obs2000):
    return obs2000.subset(np.arange(obs2000.n) < 600)
