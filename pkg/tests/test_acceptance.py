"""Acceptance suite. Each criterion prints one PASS/FAIL line.

Sizes and tolerances are the full desk-scale ones, so the module is marked
slow; deselect with ``-m "not slow"`` for a quick run.
"""

import math

import numpy as np
import pytest

from spdeblowup.mc import CampaignSpec, Pipeline, run_campaign
from spdeblowup.noise import (
    NoiseCoupling,
    TimeGrid,
    fbm_covariance,
    kernel_square_integral,
    path_rng,
    sample_fbm,
)
from spdeblowup.params import EigenMultiple, SystemParams, derive_constants
from spdeblowup.pde import SolverControls, SpatialMesh
from spdeblowup.prob import yor_functional_samples, yor_horizon, yor_ks_test

from conftest import sandwich_params

pytestmark = pytest.mark.slow


@pytest.fixture
def verdict(capsys):
    def emit(number, name, passed, detail):
        with capsys.disabled():
            print(f"\n[{number:2d}] {'PASS' if passed else 'FAIL'} {name}: {detail}")
        assert passed, f"{name}: {detail}"

    return emit


def test_01_fbm_covariance(verdict):
    grid = TimeGrid(1.0, 4)
    n = 100_000
    t = grid.times[1:]
    worst = 0.0
    for H in (0.55, 0.7, 0.9):
        x = sample_fbm(grid, H, path_rng(101, int(H * 100)), size=n)[:, 1:]
        emp = x.T @ x / n
        ref = fbm_covariance(t[:, None], t[None, :], H)
        # Var(X_i X_j) = R_ij^2 + R_ii R_jj for centred Gaussians
        se = np.sqrt((ref**2 + np.outer(np.diag(ref), np.diag(ref))) / n)
        worst = max(worst, float(np.max(np.abs(emp - ref) / se)))
    verdict(1, "fbm_covariance", worst <= 5.0, f"max |emp - R_H| / SE = {worst:.2f} (limit 5)")


def test_02_volterra_calibration(verdict):
    worst = 0.0
    for H in (0.55, 0.7, 0.9):
        for t in (0.5, 1.0, 2.0):
            for method in ("quadrature", "fast"):
                worst = max(worst, abs(kernel_square_integral(t, H, method=method) / t ** (2 * H) - 1.0))
    verdict(2, "volterra_calibration", worst <= 1e-3, f"max rel err {worst:.2e} over 9 (H, t) points, both routes")


@pytest.mark.parametrize("nu", [1.0, 2.0])
def test_03_yor_law(verdict, nu):
    s = yor_functional_samples(nu, 100_000, h=0.01, seed=303, key_offset=int(nu))
    ks = yor_ks_test(s, nu, level=0.01)
    verdict(
        3,
        f"yor_law_nu{nu:g}",
        ks.passed,
        f"KS {ks.statistic:.5f} < {ks.critical:.5f} (horizon {yor_horizon(nu):.2f})",
    )


def test_04_sandwich_order(verdict):
    p = sandwich_params(k=0.5, c1=1.0, c2=1.0)
    spec = CampaignSpec(p, TimeGrid(20.0, 4000), 1000, master_seed=404, pipelines=(Pipeline.LOWER_STAR, Pipeline.UPPER_1))
    rep = run_campaign(spec, workers=1)
    v = rep.summary["order_lower_upper"]["violations"]
    crossed = rep.summary["upper_1"]["crossed"]
    verdict(4, "sandwich_order", v == 0, f"{v} violations of tau* <= tau1* over 1000 paths ({crossed} upper crossings)")


def test_05_pde_sandwich(verdict):
    # k11 = k21 with gamma_i = lambda + k_i1^2 / 2 forces a = 0; larger data makes blow-up frequent
    p = sandwich_params(k=0.5, c1=2.0, c2=2.0)
    a = derive_constants(p).a
    spec = CampaignSpec(
        p,
        TimeGrid(8.0, 2**12),
        100,
        master_seed=505,
        pipelines=(Pipeline.LOWER_STAR, Pipeline.UPPER_1, Pipeline.PDE_SANDWICH),
        mesh=SpatialMesh(math.pi, 256),
        controls=SolverControls(),
    )
    s = run_campaign(spec, workers=1).summary["pde_sandwich"]
    ok = s["violations"] == 0 and s["blowup_rate"] >= 0.95
    verdict(
        5,
        "pde_sandwich",
        ok,
        f"a={a:g}, blow-up rate {s['blowup_rate']:.2f} (need 0.95), {s['violations']} violations, faults {s['faults']}",
    )


def test_06_prime_ordering(verdict):
    p = sandwich_params(k=0.5, c1=1.0, c2=1.5)
    spec = CampaignSpec(p, TimeGrid(20.0, 4000), 1000, master_seed=606, pipelines=(Pipeline.PRIME,))
    rep = run_campaign(spec, workers=1)
    v = rep.summary["order_prime_double_star"]["violations"]
    crossed = rep.summary["double_star"]["crossed"]
    verdict(6, "prime_ordering", v == 0, f"{v} violations of tau' <= tau** over 1000 paths ({crossed} crossings)")


EQUAL_DOMINANCE = SystemParams(
    beta1=1.0,
    beta2=1.0,
    gamma1=1.125,
    gamma2=1.125,
    k=((0.5, 0.4), (0.5, 0.4)),
    hurst=0.8,
    coupling=NoiseCoupling.VOLTERRA,
    initial=EigenMultiple(0.3, 0.5),
)
STRICT_DOMINANCE = SystemParams(
    beta1=2.0,
    beta2=1.0,
    gamma1=1.0,
    gamma2=1.0,
    k=((0.4, 0.4), (0.3, 0.3)),
    hurst=0.8,
    coupling=NoiseCoupling.VOLTERRA,
    initial=EigenMultiple(2.0, 2.0),
)


@pytest.mark.parametrize(
    "label,params,upper",
    [("equal", EQUAL_DOMINANCE, Pipeline.UPPER_1), ("strict", STRICT_DOMINANCE, Pipeline.UPPER_2)],
)
def test_07_upper_dominance(verdict, label, params, upper):
    spec = CampaignSpec(params, TimeGrid(1.0, 500), 10_000, master_seed=707, pipelines=(upper, Pipeline.TAIL_BOUNDS))
    tb = run_campaign(spec, workers=1).summary["tail_bounds"]
    values = {k: b["value"] for k, b in tb["bounds"].items()}
    in_range = all(b["applicable"] and 0.05 < b["value"] < 0.95 for b in tb["bounds"].values())
    emp = tb["empirical"]
    ok = in_range and tb["violations"] == 0 and all(tb["dominance"].values()) and len(tb["dominance"]) == 4
    detail = f"P(tau <= 1) = {emp['estimate']:.4f} +- {emp['se']:.4f}; " + ", ".join(
        f"{k}={v:.3f}" for k, v in sorted(values.items())
    )
    verdict(7, f"upper_dominance_{label}", ok, detail)


def test_08_gamma_law_dominance(verdict):
    # rho1 = rho2 = 1, a = 1, nu = 2
    p = SystemParams(
        beta1=1.0,
        beta2=1.0,
        gamma1=0.5,
        gamma2=0.5,
        k=((1.0, 1.0), (1.0, 1.0)),
        hurst=0.8,
        coupling=NoiseCoupling.INDEPENDENT,
        initial=EigenMultiple(1.0, 1.0),
    )
    spec = CampaignSpec(p, TimeGrid(20.0, 4000), 10_000, master_seed=808, pipelines=(Pipeline.UPPER_1, Pipeline.GAMMA_LAW))
    g = run_campaign(spec, workers=1).summary["gamma_law"]
    emp = g["empirical"]
    ok = g["validated_variant"] is not None and g["dominance"] is True
    verdict(
        8,
        "gamma_law_dominance",
        ok,
        f"validated variant: {g['validated_variant']} (oracle {g['oracle']['estimate']:.4f}); "
        f"P(crossed by 20) + {g['censor_allowance']:g} = {emp['estimate']:.4f} +- {emp['se']:.4f} vs "
        f"derivation {g['derivation_literal']:.4f}, printed {g['printed_literal']:.4f}",
    )


def test_09_envelope(verdict):
    p = sandwich_params(k=0.5, c1=0.2, c2=0.2)
    spec = CampaignSpec(
        p,
        TimeGrid(2.0, 1024),
        150,
        master_seed=909,
        pipelines=(Pipeline.ENVELOPE,),
        mesh=SpatialMesh(math.pi, 128),
        envelope_margin=0.5,
    )
    e = run_campaign(spec, workers=1).summary["envelope"]
    ok = e["condition_satisfied"] >= 100 and e["blowups_when_satisfied"] == 0 and e["envelope_violations"] == 0
    verdict(
        9,
        "global_envelope",
        ok,
        f"{e['condition_satisfied']} paths with condition <= 0.5, {e['blowups_when_satisfied']} blow-ups, "
        f"{e['envelope_violations']} envelope violations, max ratio {e['max_ratio']:.6f}",
    )


def test_10_determinism(verdict):
    p = sandwich_params(k=0.5, c1=1.0, c2=1.0, coupling="volterra")
    spec = CampaignSpec(
        p,
        TimeGrid(4.0, 512),
        40,
        master_seed=1010,
        pipelines=(Pipeline.LOWER_STAR, Pipeline.UPPER_1, Pipeline.PRIME, Pipeline.PDE_SANDWICH, Pipeline.TAIL_BOUNDS),
        mesh=SpatialMesh(math.pi, 64),
    )
    one = run_campaign(spec, workers=1).to_json()
    two = run_campaign(spec, workers=2).to_json()
    verdict(10, "determinism", one == two, f"JSON reports for 1 and 2 workers identical ({len(one)} bytes)")
