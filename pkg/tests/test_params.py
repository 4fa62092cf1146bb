import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spdeblowup.errors import CouplingInconsistent, DomainError, MassConditionFailed, PreconditionError
from spdeblowup.params import (
    EigenMultiple,
    SystemParams,
    Tabulated,
    check_mass_condition,
    compute_D1,
    compute_E0,
    compute_epsilon0,
    coupled_exponents,
    derive_constants,
    derive_coupled_exponents,
    eigenpair,
    stopping_thresholds,
    theta_n,
)

from conftest import sandwich_params


def _params(beta1=1.0, beta2=1.0, k=((0.1, 0.2), (0.1, 0.2)), **kw):
    base = dict(gamma1=1.0, gamma2=1.0, hurst=0.7)
    base.update(kw)
    return SystemParams(beta1=beta1, beta2=beta2, k=k, **base)


class TestEigenpair:
    @pytest.mark.parametrize(
        "L,lam,sup", [(math.pi, 1.0, 0.5), (1.0, math.pi**2, math.pi / 2), (2 * math.pi, 0.25, 0.25)]
    )
    def test_values(self, L, lam, sup):
        e = eigenpair(L)
        assert e.lam == pytest.approx(lam)
        assert e.psi_sup == pytest.approx(sup)

    @pytest.mark.parametrize("L", [0.5, 1.0, math.pi, 7.0])
    def test_unit_integral(self, L):
        from scipy import integrate

        val, _ = integrate.quad(eigenpair(L).psi, 0.0, L, epsabs=1e-13)
        assert val == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("L", [1.0, math.pi])
    def test_eigen_equation_by_finite_differences(self, L):
        e = eigenpair(L)
        x = np.linspace(0, L, 102)[1:-1]
        dx = 1e-3
        second = (e.psi(x + dx) - 2 * e.psi(x) + e.psi(x - dx)) / dx**2
        resid = np.abs(-second - e.lam * e.psi(x))
        assert resid.max() <= 1e-6 * e.psi_sup / dx**2

    def test_rejects(self):
        with pytest.raises(DomainError):
            eigenpair(0.0)


class TestCoupling:
    def test_equal_beta(self):
        assert derive_coupled_exponents(_params()) == pytest.approx((0.1, 0.2))

    def test_strict_beta(self):
        p = _params(2.0, 1.0, k=((0.4, 0.4), (0.3, 0.3)))
        assert derive_coupled_exponents(p) == pytest.approx((0.5, 0.5))

    def test_inconsistent(self):
        p = _params(2.0, 1.0, k=((0.1, 0.0), (0.1, 0.0)))
        with pytest.raises(CouplingInconsistent) as info:
            derive_coupled_exponents(p)
        assert info.value.which == "W"
        assert info.value.lhs == pytest.approx(0.2)
        assert info.value.rhs == pytest.approx(0.1)

    def test_inconsistent_routes_to_general(self):
        c = derive_constants(_params(2.0, 1.0, k=((0.1, 0.0), (0.1, 0.0))))
        assert not c.coupling_holds
        assert c.rho1 is None
        with pytest.raises(CouplingInconsistent):
            c.require_coupling()

    @settings(max_examples=60, deadline=None)
    @given(b1=st.floats(0.1, 4.0), b2=st.floats(0.1, 4.0), x=st.floats(0.0, 2.0), y=st.floats(0.0, 2.0))
    def test_swap_symmetry(self, b1, b2, x, y):
        # choose k21 so the W row holds exactly: (1+b1)k21 - k11 = (1+b2)k11 - k21
        k11 = x
        k21 = (2 + b2) * k11 / (2 + b1)
        k12 = y
        k22 = (2 + b2) * k12 / (2 + b1)
        r = coupled_exponents(b1, b2, ((k11, k12), (k21, k22)))
        s = coupled_exponents(b2, b1, ((k21, k22), (k11, k12)))
        assert r == pytest.approx(s, abs=1e-12)


class TestConstants:
    def test_D1(self):
        assert compute_D1(2.0, 1.0) == pytest.approx(0.75)
        assert compute_D1(3.0, 1.0) == pytest.approx(1.0)
        with pytest.raises(DomainError):
            compute_D1(1.0, 1.0)

    def test_epsilon0(self):
        assert compute_epsilon0(1e9, 0.75, 2.0, 1.0) == 1.0
        assert compute_epsilon0(0.75**0.5, 0.75, 2.0, 1.0) == pytest.approx(1.0)
        assert compute_epsilon0(0.5, 0.75, 2.0, 1.0) == pytest.approx(0.57735, abs=1e-5)

    def test_mass_condition(self):
        assert check_mass_condition(1.0, 100.0, 0.75, 2.0, 1.0)
        assert not check_mass_condition(1.0, 0.0, 0.75, 2.0, 1.0)

    @settings(max_examples=60, deadline=None)
    @given(b1=st.floats(1.1, 4.0), b2=st.floats(0.2, 1.0), eps0=st.floats(0.01, 1.0), excess=st.floats(1.0, 5.0))
    def test_sufficient_condition_implies_mass(self, b1, b2, eps0, excess):
        D1 = compute_D1(b1, b2)
        bound = 2 * eps0 ** (1 / (b1 - b2)) * D1 ** (1 / (1 + b2))
        E0 = excess * bound * 1.0001
        assert check_mass_condition(eps0, E0, D1, b1, b2)

    def test_E0_analytic(self):
        e = eigenpair(math.pi)
        assert compute_E0(EigenMultiple(1.0, 2.0), e) == pytest.approx(3 * math.pi / 8)

    def test_E0_tabulated(self):
        e = eigenpair(math.pi)
        x = np.linspace(0, math.pi, 10_001)
        f1 = e.psi(x)
        f1[[0, -1]] = 0.0
        tab = Tabulated(x, f1, 2 * f1)
        assert compute_E0(tab, e) == pytest.approx(3 * math.pi / 8, abs=1e-6)
        zero = Tabulated(x, np.zeros_like(x), np.zeros_like(x))
        assert compute_E0(zero, e) == 0.0

    def test_thresholds_examples(self):
        p = sandwich_params(k=0.0, c1=1.0, c2=2.0)
        c = derive_constants(p)
        assert c.theta_lower == pytest.approx(1.0)
        assert c.thresholds.theta_lower_parts == pytest.approx((2.0, 1.0))
        assert c.E0 == pytest.approx(3 * math.pi / 8)
        assert c.theta_u1 == pytest.approx(16 / (3 * math.pi))
        assert c.theta_u1 == pytest.approx(1.69765, abs=1e-5)

    def test_theta_n_identity(self):
        # pick eps0 so the bracket equals 1/2, then N = 2 / (b2 E0)
        from scipy.optimize import brentq

        b1, b2, E0 = 2.0, 1.0, 100.0
        D1 = compute_D1(b1, b2)
        eps0 = brentq(lambda e: e / 4 - e**3 * D1 / E0**2 - 0.5, 2.0, 3.0)
        assert theta_n(eps0, E0, D1, b1, b2) == pytest.approx(2 / (b2 * E0), rel=1e-10)

    @settings(max_examples=80, deadline=None)
    @given(
        b1=st.floats(1.2, 4.0),
        b2=st.floats(0.2, 1.0),
        c1=st.floats(0.05, 20.0),
        ratio=st.floats(1.0, 4.0),
        frac=st.floats(0.0, 1.0),
    )
    def test_eps0_choice_maximizes_bracket(self, b1, b2, c1, ratio, frac):
        p = SystemParams(b1, b2, 1.0, 1.0, ((0.0, 0.0), (0.0, 0.0)), 0.7, initial=EigenMultiple(c1, c1 * ratio))
        c = derive_constants(p)
        cap = compute_epsilon0(c.h2_0, c.D1, b1, b2)
        assert 0 < c.eps0 <= cap
        assert c.thresholds.mass_condition
        bracket = lambda e: e / 2 ** (1 + b2) - e ** ((1 + b1) / (b1 - b2)) * c.D1 / c.E0 ** (1 + b2)
        assert bracket(c.eps0) >= bracket(frac * cap) - 1e-15 * max(1.0, abs(bracket(c.eps0)))
        assert c.theta_u2 == pytest.approx(1 / (b2 * c.E0**b2 * bracket(c.eps0)), rel=1e-9)

    def test_maximal_eps0_degenerates(self):
        # with the cap active and C1 = C2 the bracket vanishes, so N would be infinite
        b1, b2 = 2.0, 1.0
        D1 = compute_D1(b1, b2)
        h = 0.1
        cap = compute_epsilon0(h, D1, b1, b2)
        assert cap < 1
        assert theta_n(cap, 2 * h, D1, b1, b2) == math.inf

    def test_strict_case_thresholds(self):
        p = SystemParams(2.0, 1.0, 1.0, 1.0, ((0.4, 0.4), (0.3, 0.3)), 0.7, initial=EigenMultiple(2.0, 2.0))
        c = derive_constants(p)
        assert c.theta_u1 is None
        assert c.thresholds.mass_condition in (True, False)
        if c.thresholds.mass_condition:
            assert c.theta_u2 > 0

    def test_mass_failure_raises(self):
        x = np.linspace(0, math.pi, 101)
        f1 = np.sin(x)
        f1[[0, -1]] = 0.0
        tab = Tabulated(x, f1, np.zeros_like(x))
        p = SystemParams(2.0, 1.0, 1.0, 1.0, ((0.4, 0.4), (0.3, 0.3)), 0.7, initial=tab)
        c = derive_constants(p)
        assert c.thresholds.mass_condition is False
        with pytest.raises(MassConditionFailed):
            c.thresholds.require_u2()

    def test_equal_case_has_no_u2(self):
        with pytest.raises(PreconditionError):
            derive_constants(sandwich_params()).thresholds.require_u2()

    def test_drifts(self):
        p = sandwich_params(k=0.5)
        c = derive_constants(p)
        assert c.a == pytest.approx(0.0, abs=1e-15)
        assert c.sandwich_drift_holds
        q = _params(2.0, 1.0, k=((0.4, 0.4), (0.3, 0.3)), gamma1=0.5, gamma2=0.8)
        cq = derive_constants(q)
        gap = 1.0 - 0.5 + 0.08
        assert cq.a == pytest.approx(2.0 * gap)
        assert cq.a1 == pytest.approx(1.0 * gap)

    def test_pure(self):
        p = sandwich_params(k=0.3, c1=0.7, c2=1.3)
        a, b = derive_constants(p), derive_constants(p)
        assert a.thresholds == b.thresholds
        assert (a.rho1, a.rho2, a.a, a.E0) == (b.rho1, b.rho2, b.a, b.E0)

    @settings(max_examples=60, deadline=None)
    @given(c1=st.floats(0.1, 5.0), c2=st.floats(0.1, 5.0), bump=st.floats(1.01, 3.0))
    def test_monotone_thresholds(self, c1, c2, bump):
        lo, hi = sorted((c1, c2))
        base = derive_constants(sandwich_params(k=0.0, c1=lo, c2=hi))
        up1 = derive_constants(sandwich_params(k=0.0, c1=min(lo * bump, hi), c2=hi))
        up2 = derive_constants(sandwich_params(k=0.0, c1=lo, c2=hi * bump))
        assert up1.theta_lower <= base.theta_lower
        assert up2.theta_lower <= base.theta_lower
        assert up2.theta_u1 < base.theta_u1


class TestValidation:
    @pytest.mark.parametrize(
        "kw",
        [
            dict(beta1=1.0, beta2=2.0),
            dict(beta2=0.0, beta1=1.0),
            dict(hurst=0.5),
            dict(k=((-0.1, 0.0), (0.0, 0.0))),
            dict(domain_length=0.0),
        ],
    )
    def test_rejects(self, kw):
        with pytest.raises(DomainError):
            _params(**kw)

    def test_initial_data(self):
        with pytest.raises(DomainError):
            EigenMultiple(2.0, 1.0)
        with pytest.raises(DomainError):
            Tabulated([0, 1, 2], [0, 1, 1], [0, 1, 0])
        with pytest.raises(DomainError):
            Tabulated([0, 1, 2], [0, -1, 0], [0, 1, 0])
