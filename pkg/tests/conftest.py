import math

import pytest

from spdeblowup.noise import NoiseCoupling, TimeGrid
from spdeblowup.params import EigenMultiple, SystemParams, derive_constants


def sandwich_params(k=0.5, beta=1.0, c1=1.0, c2=1.0, hurst=0.7, coupling="independent", L=math.pi):
    """Equal-exponent parameters with ``gamma_i = lambda + k_i1^2 / 2``."""
    lam = (math.pi / L) ** 2
    return SystemParams(
        beta1=beta,
        beta2=beta,
        gamma1=lam + k**2 / 2,
        gamma2=lam + k**2 / 2,
        k=((k, k), (k, k)),
        hurst=hurst,
        coupling=NoiseCoupling.parse(coupling),
        domain_length=L,
        initial=EigenMultiple(c1, c2),
    )


@pytest.fixture
def zero_noise_params():
    # all k = 0, gamma = lambda = 1, beta = 1, C1 = C2 = 1 on (0, pi)
    return sandwich_params(k=0.0)


@pytest.fixture
def zero_noise_consts(zero_noise_params):
    return derive_constants(zero_noise_params)


@pytest.fixture
def grid():
    return TimeGrid(2.0, 400)
