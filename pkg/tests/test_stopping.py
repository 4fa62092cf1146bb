import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spdeblowup.errors import DomainError, GridMismatch, PreconditionError
from spdeblowup.noise import SamplePath, TimeGrid, path_rng, sample_path
from spdeblowup.params import EigenMultiple, SystemParams, derive_constants
from spdeblowup.stopping import (
    Combine,
    ExpFunctionalSpec,
    cumulative_exp_functional,
    first_crossing,
    tau_double_star,
    tau_lower_star,
    tau_prime,
    tau_upper_1,
    tau_upper_2,
    tau_upper_general,
)

from conftest import sandwich_params

paths_strategy = st.builds(
    lambda seed, coupling: sample_path(TimeGrid(4.0, 400), 0.7, coupling, path_rng(seed, 0)),
    st.integers(0, 2**32 - 1),
    st.sampled_from(["independent", "volterra"]),
)


class TestCumulative:
    def test_unit_integrand(self, grid):
        cum = cumulative_exp_functional(SamplePath.zero(grid), ExpFunctionalSpec(0.0, 0.0))
        np.testing.assert_allclose(cum.values, grid.times, rtol=0, atol=1e-13)
        assert not cum.saturated

    def test_decaying_integrand(self, grid):
        cum = cumulative_exp_functional(SamplePath.zero(grid), ExpFunctionalSpec(0.0, 0.0, -1.0))
        exact = 1 - np.exp(-grid.times)
        assert np.max(np.abs(cum.values - exact)) <= grid.dt**2

    @settings(max_examples=25, deadline=None)
    @given(path=paths_strategy, rw=st.floats(-2, 2), rb=st.floats(-2, 2), d=st.floats(-2, 2))
    def test_min_of_identical_is_single(self, path, rw, rb, d):
        single = ExpFunctionalSpec(rw, rb, d)
        both = ExpFunctionalSpec(rw, rb, d, Combine.MIN, single)
        a = cumulative_exp_functional(path, single).values
        b = cumulative_exp_functional(path, both).values
        np.testing.assert_array_equal(a, b)

    @settings(max_examples=25, deadline=None)
    @given(path=paths_strategy, rw=st.floats(-3, 3), rb=st.floats(-3, 3), d=st.floats(-3, 3))
    def test_nondecreasing_from_zero(self, path, rw, rb, d):
        c = cumulative_exp_functional(path, ExpFunctionalSpec(rw, rb, d)).values
        assert c[0] == 0.0
        assert np.all(np.diff(c) >= 0)

    @settings(max_examples=25, deadline=None)
    @given(path=paths_strategy, rw=st.floats(-2, 2), rb=st.floats(-2, 2))
    def test_min_le_single_le_max(self, path, rw, rb):
        a = ExpFunctionalSpec(rw, rb)
        b = ExpFunctionalSpec(rb, rw, 0.1)
        lo = cumulative_exp_functional(path, ExpFunctionalSpec(rw, rb, 0.0, Combine.MIN, b)).values
        mid = cumulative_exp_functional(path, a).values
        hi = cumulative_exp_functional(path, ExpFunctionalSpec(rw, rb, 0.0, Combine.MAX, b)).values
        assert np.all(lo <= mid) and np.all(mid <= hi)

    def test_saturation_flag(self):
        g = TimeGrid(1.0, 10)
        cum = cumulative_exp_functional(SamplePath.zero(g), ExpFunctionalSpec(0.0, 0.0, 2000.0))
        assert cum.saturated
        assert np.all(np.isfinite(cum.values))

    def test_rejects_bad_specs(self):
        with pytest.raises(DomainError):
            ExpFunctionalSpec(math.nan, 0.0)
        with pytest.raises(DomainError):
            ExpFunctionalSpec(0.0, 0.0, 0.0, Combine.MAX)


class TestFirstCrossing:
    def test_linear_exact(self, grid):
        est = first_crossing(grid.times, grid, 1.0)
        assert est.crossed and est.t_hat == 1.0

    def test_censored(self, grid):
        est = first_crossing(grid.times, grid, 5.0)
        assert est.censored and math.isnan(est.t_hat) and est.value == math.inf
        assert est.integral_at_horizon == pytest.approx(2.0)

    def test_inverse_oracle(self, grid):
        cum = cumulative_exp_functional(SamplePath.zero(grid), ExpFunctionalSpec(0.0, 0.0, -1.0))
        est = first_crossing(cum, grid, 0.5)
        assert est.t_hat == pytest.approx(math.log(2), abs=grid.dt**2)

    def test_interpolation_hits_threshold(self, grid):
        c = np.cumsum(np.r_[0.0, np.linspace(0.1, 2.0, grid.n_steps)]) * grid.dt
        est = first_crossing(c, grid, 0.7)
        i0, i1 = est.bracket
        frac = (est.t_hat - i0 * grid.dt) / grid.dt
        assert c[i0] + frac * (c[i1] - c[i0]) == pytest.approx(0.7, rel=1e-12)

    def test_errors(self, grid):
        with pytest.raises(GridMismatch):
            first_crossing(np.zeros(3), grid, 1.0)
        with pytest.raises(DomainError):
            first_crossing(grid.times, grid, 0.0)

    @settings(max_examples=25, deadline=None)
    @given(path=paths_strategy, th=st.floats(0.01, 10.0), bump=st.floats(0.0, 10.0))
    def test_monotone_in_threshold(self, path, th, bump):
        cum = cumulative_exp_functional(path, ExpFunctionalSpec(1.0, 0.5))
        assert first_crossing(cum, path.grid, th).value <= first_crossing(cum, path.grid, th + bump).value


class TestDegenerate:
    def test_zero_path_values(self, zero_noise_params, zero_noise_consts, grid):
        g = TimeGrid(4.0, 4000)
        path = SamplePath.zero(g)
        c = zero_noise_consts
        assert tau_lower_star(path, c).t_hat == pytest.approx(2.0, abs=1e-12)
        assert tau_upper_1(path, c).t_hat == pytest.approx(8 / math.pi, abs=1e-12)
        assert tau_double_star(path, zero_noise_params, c).t_hat == pytest.approx(2.0, abs=1e-12)
        assert tau_prime(path, zero_noise_params, c).t_hat == pytest.approx(2.0, abs=1e-12)
        assert tau_upper_general(path, zero_noise_params, c).t_hat == pytest.approx(8 / math.pi, abs=1e-12)

    def test_preconditions(self, grid):
        path = SamplePath.zero(grid)
        off = SystemParams(1.0, 1.0, 2.0, 2.0, ((0.5, 0.5), (0.5, 0.5)), 0.7)
        c = derive_constants(off)
        with pytest.raises(PreconditionError):
            tau_lower_star(path, c)
        tau_lower_star(path, c, check_gamma=False)
        with pytest.raises(PreconditionError):
            tau_upper_2(path, c)
        with pytest.raises(PreconditionError):
            tau_upper_general(path, off, c, case="strict")
        with pytest.raises(DomainError):
            tau_upper_general(path, off, c, case="other")


class TestOrdering:
    @settings(max_examples=40, deadline=None)
    @given(
        path=paths_strategy,
        k=st.floats(0.0, 1.5),
        c1=st.floats(0.2, 3.0),
        ratio=st.floats(1.0, 3.0),
        beta=st.floats(0.5, 2.0),
    )
    def test_lower_le_upper_equal_beta(self, path, k, c1, ratio, beta):
        p = sandwich_params(k=k, beta=beta, c1=c1, c2=c1 * ratio, coupling=path.coupling)
        c = derive_constants(p)
        lo, hi = tau_lower_star(path, c), tau_upper_1(path, c)
        if hi.crossed:
            assert lo.crossed and lo.t_hat <= hi.t_hat

    @settings(max_examples=40, deadline=None)
    @given(path=paths_strategy, c1=st.floats(0.5, 4.0), ratio=st.floats(1.0, 2.0))
    def test_lower_le_upper_strict_beta(self, path, c1, ratio):
        # k11 = 0.4, k21 = 0.3 satisfies both coupling equalities for (2, 1)
        k = ((0.4, 0.4), (0.3, 0.3))
        p = SystemParams(
            2.0, 1.0, 1.0 + 0.08, 1.0 + 0.045, k, 0.7, path.coupling, initial=EigenMultiple(c1, c1 * ratio)
        )
        c = derive_constants(p)
        lo, hi = tau_lower_star(path, c), tau_upper_2(path, c)
        if hi.crossed:
            assert lo.crossed and lo.t_hat <= hi.t_hat

    @settings(max_examples=40, deadline=None)
    @given(
        path=paths_strategy,
        k=st.lists(st.floats(0.0, 1.0), min_size=4, max_size=4),
        c1=st.floats(0.2, 3.0),
        ratio=st.floats(1.0, 3.0),
        b2=st.floats(0.5, 1.0),
        extra=st.floats(0.0, 1.0),
    )
    def test_prime_le_double_star(self, path, k, c1, ratio, b2, extra):
        kk = ((k[0], k[1]), (k[2], k[3]))
        p = SystemParams(
            b2 + extra, b2, 1 + k[0] ** 2 / 2, 1 + k[2] ** 2 / 2, kk, 0.7, path.coupling,
            initial=EigenMultiple(c1, c1 * ratio),
        )
        c = derive_constants(p)
        assert tau_prime(path, p, c).value <= tau_double_star(path, p, c).value
