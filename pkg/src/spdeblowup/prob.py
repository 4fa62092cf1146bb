"""Analytic blow-up probability bounds and their Monte Carlo oracles.

Upper bounds on ``P(tau_1* <= T)`` (or ``tau_2*``) come from a Gaussian
concentration inequality and from Markov's inequality. Lower bounds on the
probability of finite-time blow-up come from a Malliavin-calculus estimate
and, for Brownian-like noise with ``rho1 == rho2``, from the law of the
perpetual exponential functional of Brownian motion with drift,

    int_0^inf exp(2 (B_u - nu u)) du  ~  1 / (2 Z_nu),   Z_nu ~ Gamma(nu, 1).

Every bound returns a :class:`BoundResult` carrying an applicability flag,
so hypothesis failures are reported rather than raised.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from ._kernels import kernels
from .errors import DomainError, PreconditionError
from .noise import NoiseCoupling, TimeGrid, path_rng, sample_path, volterra_cross_covariance, volterra_kernel_fast
from .special import regularized_lower_incomplete_gamma, regularized_upper_incomplete_gamma
from .stopping import ExpFunctionalSpec, cumulative_exp_functional

QUAD_OPTS = {"epsabs": 0.0, "epsrel": 1e-11, "limit": 400}


@dataclass(frozen=True)
class BoundResult:
    """One evaluated bound.

    ``value`` is ``None`` when ``applicable`` is False; ``note`` says why.
    """

    name: str
    variant: str
    value: object
    applicable: bool
    note: str = ""
    diagnostics: dict = field(default_factory=dict)


def _inapplicable(name, variant, note, **diag):
    return BoundResult(name, variant, None, False, note, diag)


def _clamp01(x):
    return min(1.0, max(0.0, float(x)))


# -- Gaussian exponential moments ----------------------------------------


def cross_covariance(s, hurst, method="closed"):
    """``E[W(s) B^H(s)]`` for the Volterra coupling.

    ``method="quadrature"`` integrates the kernel numerically; the default
    uses the closed form.
    """
    if s <= 0:
        return 0.0
    if method == "closed":
        return float(volterra_cross_covariance(s, hurst))
    if method == "quadrature":
        b = hurst - 0.5
        # the kernel behaves like r^-b at 0 and (s-r)^b at s; quad's algebraic weight absorbs both
        eps = 1e-13 * s

        def f(r):
            r = min(max(r, eps), s - eps)
            return volterra_kernel_fast(s, r, hurst) * r**b * (s - r) ** (-b)

        val, _ = integrate.quad(f, 0.0, s, weight="alg", wvar=(-b, b), **QUAD_OPTS)
        return val
    raise DomainError(f"unknown method {method!r}")


def mixed_variance(s, rho1, rho2, hurst, coupling):
    """``Var(rho1 W(s) + rho2 B^H(s))``."""
    coupling = NoiseCoupling.parse(coupling)
    s = float(s)
    if s < 0:
        raise DomainError("time must be nonnegative")
    var = rho1**2 * s + rho2**2 * s ** (2 * hurst)
    if coupling is NoiseCoupling.VOLTERRA and rho1 != 0 and rho2 != 0:
        var += 2.0 * rho1 * rho2 * cross_covariance(s, hurst)
    return var


def mgf_mixed(s, rho1, rho2, hurst, coupling=NoiseCoupling.INDEPENDENT):
    """``E[exp(rho1 W(s) + rho2 B^H(s))] = exp(Var / 2)``; ``s`` may be an array."""
    if np.ndim(s):
        return np.array([mgf_mixed(float(x), rho1, rho2, hurst, coupling) for x in np.ravel(s)]).reshape(np.shape(s))
    return math.exp(0.5 * mixed_variance(s, rho1, rho2, hurst, coupling))


def mu_T(T, drift_a, rho1, rho2, hurst, coupling=NoiseCoupling.INDEPENDENT):
    """``int_0^T exp(-a s) E[exp(rho1 W(s) + rho2 B^H(s))] ds`` by adaptive quadrature.

    ``T`` may be ``inf`` when the integral converges.
    """
    T = float(T)
    if not T > 0:
        raise DomainError(f"T must be positive, got {T!r}")

    def f(s):
        return math.exp(-drift_a * s + 0.5 * mixed_variance(s, rho1, rho2, hurst, coupling))

    val, _ = integrate.quad(f, 0.0, T, **QUAD_OPTS)
    return val


# -- upper bounds ------------------------------------------------------------


@dataclass(frozen=True)
class TailBoundInput:
    """Inputs for the upper tail bounds.

    ``a`` is the drift constant (``a`` in the equal-exponent case, ``a1`` in
    the strict case) and ``threshold`` the matching stopping threshold.
    """

    T: float
    rho1: float
    rho2: float
    a: float
    hurst: float
    coupling: NoiseCoupling
    threshold: float

    def __post_init__(self):
        if not self.T > 0:
            raise DomainError("T must be positive")
        if not self.threshold > 0:
            raise DomainError("threshold must be positive")
        object.__setattr__(self, "coupling", NoiseCoupling.parse(self.coupling))

    @classmethod
    def from_constants(cls, consts, T, case="equal"):
        consts.require_coupling()
        p = consts.params
        if case == "equal":
            if not p.equal_beta:
                raise PreconditionError("equal case needs beta1 == beta2")
            a, theta = consts.a, consts.thresholds.theta_u1
        elif case == "strict":
            a, theta = consts.a1, consts.thresholds.require_u2()
        else:
            raise DomainError(f"case must be 'equal' or 'strict', got {case!r}")
        return cls(T, consts.rho1, consts.rho2, a, p.hurst, p.coupling, theta)


def concentration_m2(T, rho1, rho2, hurst):
    """``M^2 = 2 rho1^2 T + 2 rho2^2 T^(2H)``."""
    return 2.0 * rho1**2 * T + 2.0 * rho2**2 * T ** (2 * hurst)


def tail_bound_concentration(inp, literal=False):
    """``min(1, 2 exp(-(ln theta - ln mu)^2 / (2 M^2)))``, needs ``theta > mu(T)``.

    ``literal=True`` squares ``M^2`` in the denominator. The default ``2 M^2``
    is what the Gaussian concentration inequality delivers.
    """
    variant = "literal" if literal else "default"
    mu = mu_T(inp.T, inp.a, inp.rho1, inp.rho2, inp.hurst, inp.coupling)
    m2 = concentration_m2(inp.T, inp.rho1, inp.rho2, inp.hurst)
    diag = {"mu": mu, "M2": m2}
    if not inp.threshold > mu:
        return _inapplicable("concentration", variant, "threshold <= mu(T)", **diag)
    if m2 == 0.0:
        return BoundResult("concentration", variant, 0.0, True, "degenerate noise", diag)
    denom = 2.0 * m2**2 if literal else 2.0 * m2
    gap = math.log(inp.threshold) - math.log(mu)
    return BoundResult("concentration", variant, _clamp01(2.0 * math.exp(-(gap**2) / denom)), True, "", diag)


def _expm1_ratio(c, T):
    # (e^{cT} - 1) / c with the removable singularity at c = 0
    if abs(c * T) < 1e-12:
        return T
    return math.expm1(c * T) / c


def tail_bound_markov(inp, case="equal", variant="printed"):
    """Markov-inequality bound on ``P(tau <= T)``.

    Independent noise: ``(1/theta) int_0^T exp((rho1^2/2 - a) s + rho2^2 s^(2H) / 2) ds``.

    Volterra-coupled noise, ``variant="printed"``: the closed form with
    prefactor ``1/(2 theta)`` (equal case) or ``1/theta`` (strict case),
    first term ``(e^{(rho1^2 - a) T} - 1) / (rho1^2 - a)``, under the
    hypothesis ``rho1^2 > a``. ``variant="corrected"`` uses the second
    moment ``E e^{2 rho1 W} = e^{2 rho1^2 s}`` and the un-halved threshold,
    with no drift hypothesis.
    """
    if case not in ("equal", "strict"):
        raise DomainError(f"case must be 'equal' or 'strict', got {case!r}")
    if variant not in ("printed", "corrected"):
        raise DomainError(f"variant must be 'printed' or 'corrected', got {variant!r}")
    T, r1, r2, a, H, theta = inp.T, inp.rho1, inp.rho2, inp.a, inp.hurst, inp.threshold
    name = f"markov_{case}_{inp.coupling.value}"
    if inp.coupling is NoiseCoupling.INDEPENDENT:
        val, _ = integrate.quad(lambda s: math.exp((0.5 * r1**2 - a) * s + 0.5 * r2**2 * s ** (2 * H)), 0.0, T, **QUAD_OPTS)
        return BoundResult(name, variant, _clamp01(val / theta), True, "", {"integral": val})

    second, _ = integrate.quad(lambda s: math.exp(-a * s + 2.0 * r2**2 * s ** (2 * H)), 0.0, T, **QUAD_OPTS)
    if variant == "printed":
        if not r1**2 > a:
            return _inapplicable(name, variant, "drift hypothesis rho1^2 > a fails", rho1_sq=r1**2, a=a)
        first = _expm1_ratio(r1**2 - a, T)
        pref = 1.0 / (2.0 * theta) if case == "equal" else 1.0 / theta
    else:
        first = _expm1_ratio(2.0 * r1**2 - a, T)
        pref = 1.0 / theta
    raw = pref * (first + second)
    return BoundResult(name, variant, _clamp01(raw), True, "", {"first": first, "second": second, "raw": raw})


# -- Malliavin lower bound ---------------------------------------------------


@dataclass(frozen=True)
class LEstimate:
    """Monte Carlo estimate of ``L(alpha)`` at two horizons.

    ``value`` and ``value_2x`` are clamped below at 1; ``raw`` and ``raw_2x``
    are the unclamped sample means.
    """

    value: float
    se: float
    raw: float
    value_2x: float
    se_2x: float
    raw_2x: float
    t_max: float
    n_paths: int
    drift: float
    threshold: float


def _l_drift_threshold(consts, case, drift):
    if case == "equal":
        theta = consts.thresholds.theta_u1
    elif case == "strict":
        theta = consts.thresholds.require_u2()
    else:
        raise DomainError(f"case must be 'equal' or 'strict', got {case!r}")
    if drift == "printed":
        a = consts.a
    elif drift == "a1":
        a = consts.a1
    else:
        raise DomainError(f"drift must be 'printed' or 'a1', got {drift!r}")
    return a, theta


def l_alpha_ratio(cum, times, alpha, theta):
    """``sup_t (ln(cum(t) + 1) + t^alpha) / (ln(theta + 1) + t^alpha)`` over the grid."""
    ta = times**alpha
    return float(np.max((np.log1p(cum) + ta) / (math.log1p(theta) + ta)))


def estimate_L_alpha(
    params, consts, alpha, case="equal", n_paths=1000, t_max=5.0, n_steps=1000, seed=0, drift="printed", key_offset=0
):
    """Monte Carlo estimate of ``E[sup_t ratio]`` at ``t_max`` and ``2 t_max``.

    The integrand is ``exp(-a s + rho1 W + rho2 B^H)``. The strict case uses
    the equal-case drift ``a`` by default; ``drift="a1"`` switches to
    ``a1``.
    """
    if not alpha > params.hurst:
        raise DomainError("alpha must exceed the Hurst index")
    consts.require_coupling()
    a, theta = _l_drift_threshold(consts, case, drift)
    grid = TimeGrid(2.0 * t_max, 2 * n_steps)
    times = grid.times
    spec = ExpFunctionalSpec(consts.rho1, consts.rho2, -a)
    r1 = np.empty(n_paths)
    r2 = np.empty(n_paths)
    for i in range(n_paths):
        path = sample_path(grid, params.hurst, params.coupling, path_rng(seed, key_offset + i))
        cum = cumulative_exp_functional(path, spec).values
        r1[i] = l_alpha_ratio(cum[: n_steps + 1], times[: n_steps + 1], alpha, theta)
        r2[i] = l_alpha_ratio(cum, times, alpha, theta)

    def stat(r):
        m = math.fsum(r) / r.size
        se = float(np.std(r, ddof=1) / math.sqrt(r.size)) if r.size > 1 else 0.0
        return max(1.0, m), se, m

    v1, s1, m1 = stat(r1)
    v2, s2, m2 = stat(r2)
    return LEstimate(v1, s1, m1, v2, s2, m2, t_max, n_paths, a, theta)


def malliavin_denominator(alpha, hurst, rho1, rho2, U):
    """Denominator of the Malliavin lower-bound exponent."""
    lu = math.log(U + 1.0)
    t1 = rho1**2 * (2 * alpha - 1) ** (2 - 1 / alpha) * lu ** (1 / alpha - 2)
    t2 = 2 * rho2**2 * alpha**2 * lu ** (2 * hurst / alpha - 2) * ((alpha - hurst) / alpha) ** (2 - 2 * hurst / alpha)
    return t1 + t2


def lower_bound_malliavin(params, consts, alpha, L, case="equal", variant="printed"):
    """``1 - exp(-alpha^2 (L - 1)^2 / den)`` clamped to ``[0, 1]``.

    ``variant="corrected"`` halves the exponent, restoring the factor 2 of
    the Gaussian tail ``exp(-x^2 / (2 sigma^2))``.
    """
    if not alpha > params.hurst:
        raise DomainError("alpha must exceed the Hurst index")
    if variant not in ("printed", "corrected"):
        raise DomainError(f"variant must be 'printed' or 'corrected', got {variant!r}")
    consts.require_coupling()
    U = consts.thresholds.theta_u1 if case == "equal" else consts.thresholds.require_u2()
    den = malliavin_denominator(alpha, params.hurst, consts.rho1, consts.rho2, U)
    diag = {"denominator": den, "U": U, "L": float(L)}
    if case == "strict":
        diag["note_drift"] = "L uses the equal-case drift a by default"
    if den == 0.0:
        return BoundResult("malliavin", variant, 0.0, True, "degenerate noise", diag)
    expo = alpha**2 * (float(L) - 1.0) ** 2 / den
    if variant == "corrected":
        expo /= 2.0
    return BoundResult("malliavin", variant, _clamp01(-math.expm1(-expo)), True, "", diag)


# -- Gamma law ---------------------------------------------------------------


@dataclass(frozen=True)
class GammaLawInput:
    """``rho = rho1 = rho2``, drift ``a > 0`` and threshold; ``nu = 2 a / rho^2``."""

    rho: float
    a: float
    threshold: float
    hurst: float = None
    coupling: NoiseCoupling = NoiseCoupling.INDEPENDENT

    def __post_init__(self):
        if self.rho == 0:
            raise DomainError("rho must be nonzero")
        if not self.a > 0:
            raise DomainError("a must be positive")
        if not self.threshold > 0:
            raise DomainError("threshold must be positive")
        object.__setattr__(self, "coupling", NoiseCoupling.parse(self.coupling))

    @property
    def nu(self):
        return 2.0 * self.a / self.rho**2

    @property
    def hypothesis_holds(self):
        h = self.hurst
        return h is not None and 0.75 < h < 1.0 and self.coupling is NoiseCoupling.INDEPENDENT

    @classmethod
    def from_constants(cls, consts, rtol=1e-12):
        consts.require_coupling()
        if not math.isclose(consts.rho1, consts.rho2, rel_tol=rtol):
            raise PreconditionError("the Gamma-law bound needs rho1 == rho2")
        p = consts.params
        if not p.equal_beta:
            raise PreconditionError("the Gamma-law bound needs beta1 == beta2")
        return cls(consts.rho1, consts.a, consts.thresholds.theta_u1, p.hurst, p.coupling)


@dataclass(frozen=True)
class GammaLawResult:
    """Both readings of the Gamma-law lower bound.

    ``printed_literal = P(nu, 2 nu / (rho^2 theta))`` integrates the density as
    printed from its printed lower limit ``rho^2 theta / 2``.
    ``derivation_literal = P(nu, 2 / (rho^2 theta))`` follows from the time
    change and the perpetual-functional law.
    """

    nu: float
    printed_literal: float
    derivation_literal: float
    lower_limit: float
    discrepancy: bool
    hypothesis_holds: bool


def gamma_law_lower_bound(inp):
    nu = inp.nu
    lower = inp.rho**2 * inp.threshold / 2.0
    printed = regularized_lower_incomplete_gamma(nu, nu / lower)
    derived = regularized_lower_incomplete_gamma(nu, 2.0 / (inp.rho**2 * inp.threshold))
    return GammaLawResult(nu, printed, derived, lower, not math.isclose(printed, derived, rel_tol=1e-12, abs_tol=1e-15), inp.hypothesis_holds)


def yor_law_cdf(x, nu):
    """CDF of ``1 / (2 Z_nu)``: ``P(1/(2 Z) <= x) = Q(nu, 1/(2x))``."""
    x = float(x)
    if x <= 0:
        return 0.0
    return regularized_upper_incomplete_gamma(nu, 1.0 / (2.0 * x))


def yor_horizon(nu, z=4.5, log_floor=7.0):
    """Truncation time for ``int_0^T exp(2 (B_u - nu u)) du``.

    The neglected tail equals ``exp(2 X_T)`` times an independent copy of the
    full functional. ``T`` is the smallest time with ``nu T - z sqrt(T) >=
    log_floor``, so ``exp(2 X_T) <= e^{-2 log_floor}`` except on an event of
    probability ``P(N(0,1) > z)``.
    """
    if not nu > 0:
        raise DomainError("nu must be positive")
    root = (z + math.sqrt(z * z + 4.0 * nu * log_floor)) / (2.0 * nu)
    return root * root


def yor_functional_samples(nu, n_paths, h=0.01, horizon=None, seed=0, chunk=2000, key_offset=0):
    """Samples of ``int_0^T exp(2 (B_u - nu u)) du``.

    Each cell uses Simpson's rule with the Brownian-bridge midpoint
    correction ``E[exp(B_mid - ...)]``. Chunk ``c`` draws from
    ``path_rng(seed, key_offset + c)``, so results do not depend on how
    chunks are scheduled.
    """
    if horizon is None:
        horizon = yor_horizon(nu)
    m = int(math.ceil(horizon / h))
    h = horizon / m
    out = np.empty(int(n_paths))
    k = kernels()
    for c, start in enumerate(range(0, out.size, chunk)):
        stop = min(start + chunk, out.size)
        z = path_rng(seed, key_offset + c).standard_normal((stop - start, m))
        buf = np.empty(stop - start)
        k.yor_simpson(z, h, float(nu), buf)
        out[start:stop] = buf
    return out


@dataclass(frozen=True)
class KsResult:
    statistic: float
    critical: float
    passed: bool
    n: int


def yor_ks_test(samples, nu, level=0.01):
    """Kolmogorov-Smirnov test of ``samples`` against the ``1 / (2 Z_nu)`` law."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    cdf = np.array([yor_law_cdf(v, nu) for v in x])
    d_plus = np.max(np.arange(1, n + 1) / n - cdf)
    d_minus = np.max(cdf - np.arange(n) / n)
    d = float(max(d_plus, d_minus))
    crit = float(stats.kstwo.ppf(1.0 - level, n))
    return KsResult(d, crit, d < crit, n)


@dataclass(frozen=True)
class GammaLawOracle:
    """MC estimate of ``P(int_0^T exp(rho B(s) - a s) ds > theta)`` and its verdict.

    ``validated`` is ``"derivation"``, ``"printed"``, ``"both"`` (the variants
    coincide within the band) or ``None``.
    """

    estimate: float
    se: float
    horizon: float
    within: dict
    validated: object


def gamma_law_mc_oracle(inp, n_paths=100_000, h=0.01, t_max=None, seed=0, n_se=3.0, key_offset=0):
    """Decide which Gamma-law variant matches a Brownian Monte Carlo estimate.

    With ``s = 4 u / rho^2`` the functional equals
    ``(4 / rho^2) int_0^{rho^2 T / 4} exp(2 (B_u - nu u)) du``.
    """
    res = gamma_law_lower_bound(inp)
    nu = res.nu
    r2 = inp.rho**2
    horizon_u = yor_horizon(nu) if t_max is None else r2 * float(t_max) / 4.0
    samples = yor_functional_samples(nu, n_paths, h=h, horizon=horizon_u, seed=seed, key_offset=key_offset)
    hits = int(np.count_nonzero(samples > r2 * inp.threshold / 4.0))
    p = hits / samples.size
    se = math.sqrt(max(p * (1 - p), 1.0 / samples.size) / samples.size)
    within = {
        "printed": abs(p - res.printed_literal) <= n_se * se,
        "derivation": abs(p - res.derivation_literal) <= n_se * se,
    }
    if within["printed"] and within["derivation"]:
        verdict = "both"
    elif within["derivation"]:
        verdict = "derivation"
    elif within["printed"]:
        verdict = "printed"
    else:
        verdict = None
    return GammaLawOracle(p, se, 4.0 * horizon_u / r2, within, verdict)
