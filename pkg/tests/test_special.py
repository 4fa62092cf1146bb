import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special as sc

from spdeblowup.errors import DomainError
from spdeblowup.special import (
    log_gamma,
    regularized_lower_incomplete_gamma as P,
    regularized_upper_incomplete_gamma as Q,
)


def test_exponential_law():
    assert P(1.0, 1.0) == pytest.approx(1 - math.exp(-1), abs=1e-12)
    assert P(1.0, 1.0) == pytest.approx(0.6321206, abs=1e-7)


def test_integer_shape_closed_form():
    assert P(2.0, 2.0) == pytest.approx(1 - 3 * math.exp(-2), abs=1e-12)
    assert P(2.0, 2.0) == pytest.approx(0.5939942, abs=1e-7)


def test_half_shape_is_erf():
    assert P(0.5, 0.5) == pytest.approx(math.erf(math.sqrt(0.5)), abs=1e-12)
    assert P(0.5, 0.5) == pytest.approx(0.6826895, abs=1e-7)


def test_edges():
    assert P(3.0, 0.0) == 0.0
    assert P(3.0, math.inf) == 1.0
    assert Q(3.0, 0.0) == 1.0


def test_domain_errors():
    with pytest.raises(DomainError):
        P(0.0, 1.0)
    with pytest.raises(DomainError):
        P(1.0, -1.0)
    with pytest.raises(DomainError):
        log_gamma(-1.0)


def test_array_input_broadcasts():
    out = P(np.array([1.0, 2.0]), 2.0)
    assert out.shape == (2,)
    assert out[1] == pytest.approx(1 - 3 * math.exp(-2), abs=1e-12)


def test_log_gamma():
    assert log_gamma(5.0) == pytest.approx(math.log(24.0), abs=1e-13)
    assert log_gamma(0.5) == pytest.approx(0.5 * math.log(math.pi), abs=1e-13)


@settings(max_examples=200, deadline=None)
@given(nu=st.floats(0.05, 60.0), u=st.floats(0.0, 200.0))
def test_matches_scipy(nu, u):
    assert abs(P(nu, u) - sc.gammainc(nu, u)) <= 1e-12
    assert abs(Q(nu, u) - sc.gammaincc(nu, u)) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(nu=st.floats(0.1, 20.0), u=st.floats(0.0, 50.0), du=st.floats(0.0, 5.0))
def test_monotone_in_u(nu, u, du):
    assert P(nu, u) <= P(nu, u + du) + 1e-15
