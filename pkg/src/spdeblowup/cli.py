"""Command-line front end.

Usage::

    spdeblowup bounds   --config cfg.json [--out DIR]
    spdeblowup simulate --config cfg.json [--out DIR] [--threads N] [--seed S]
    spdeblowup validate --config cfg.json [--threads N] [--seed S]

Exit codes: 0 success, 1 config or usage error, 2 validation failure,
3 runtime fault. ``SPDEBLOWUP_THREADS`` sets the default worker count.
"""

import argparse
import csv
import math
import os
import sys
import traceback

import numpy as np

from .config import ConfigError, load_config
from .errors import PreconditionError
from .mc import CampaignSpec, Pipeline, default_workers, run_campaign
from .noise import TimeGrid, fbm_covariance, kernel_square_integral, path_rng, sample_fbm
from .params import EigenMultiple, SystemParams, derive_constants, gamma_matches_eigenvalue
from .pde import sharp_bound_threshold
from .prob import (
    GammaLawInput,
    TailBoundInput,
    estimate_L_alpha,
    gamma_law_lower_bound,
    lower_bound_malliavin,
    tail_bound_concentration,
    tail_bound_markov,
    yor_functional_samples,
    yor_ks_test,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

INAPPLICABLE = "inapplicable"


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else f"{float(v):.17g}"
    return str(v)


# -- bounds ------------------------------------------------------------------


def compute_bounds(cfg):
    """Rows ``(quantity, variant, value, status, note)`` for every constant and bound."""
    p = cfg.params
    c = derive_constants(p)
    th = c.thresholds
    rows = []

    def add(q, v, status="ok", note="", variant=""):
        rows.append((q, variant, v, status, note))

    def na(q, note, variant=""):
        rows.append((q, variant, None, INAPPLICABLE, note))

    add("lambda", c.lam)
    add("psi_sup", c.psi_sup)
    add("psi_sq_integral", c.eig.psi_sq_integral)
    add("coupling_holds", c.coupling_holds)
    if c.coupling_holds:
        add("rho1", c.rho1)
        add("rho2", c.rho2)
    else:
        na("rho1", "coupling equalities fail")
        na("rho2", "coupling equalities fail")
    add("rho_first_w", c.rho_first[0])
    add("rho_first_bh", c.rho_first[1])
    add("rho_second_w", c.rho_second[0])
    add("rho_second_bh", c.rho_second[1])
    add("gamma_min", c.gamma_min)
    add("k_sq", c.k_sq)
    add("a", c.a)
    add("a1", c.a1)
    add("h1_0", c.h1_0)
    add("h2_0", c.h2_0)
    add("E0", c.E0)
    add("gamma_sandwich", gamma_matches_eigenvalue(p, c.eig))
    if p.equal_beta:
        na("D1", "needs beta1 > beta2")
        na("eps0", "needs beta1 > beta2")
        na("mass_condition", "needs beta1 > beta2")
    else:
        add("D1", c.D1)
        add("eps0", c.eps0)
        add("mass_condition", th.mass_condition)

    # thresholds that do not need the coupling equalities
    if th.theta_lower_parts is not None:
        add("theta_lower_1", th.theta_lower_parts[0], note="general lower bound, component 1")
        add("theta_lower_2", th.theta_lower_parts[1], note="general lower bound, component 2")
    else:
        na("theta_lower_1", "needs eigen-multiple initial data")
        na("theta_lower_2", "needs eigen-multiple initial data")
    if "sharp_c" in cfg.bounds and p.eigen_multiple:
        sb = sharp_bound_threshold(p, c, cfg.bounds["sharp_c"])
        for i in (0, 1):
            add(f"sharp_value_{i + 1}", sb.values[i])
            add(f"sharp_budget_{i + 1}", sb.budgets[i])

    coupled = c.coupling_holds
    why = "coupling equalities fail"
    if coupled and th.theta_lower is not None:
        add("theta_lower", th.theta_lower)
    else:
        na("theta_lower", why if not coupled else "needs eigen-multiple initial data")
    if coupled and p.equal_beta:
        add("theta_u1", th.theta_u1)
    else:
        na("theta_u1", why if not coupled else "needs beta1 == beta2")
    if coupled and not p.equal_beta and th.theta_u2 is not None:
        add("theta_u2", th.theta_u2)
    else:
        na("theta_u2", why if not coupled else ("needs beta1 > beta2" if p.equal_beta else "mass condition fails"))

    T = float(cfg.bounds.get("T", 1.0))
    case = "equal" if p.equal_beta else "strict"
    upper_ok = coupled and (p.equal_beta or th.theta_u2 is not None)
    if upper_ok:
        inp = TailBoundInput.from_constants(c, T, case)
        for b in (
            tail_bound_concentration(inp),
            tail_bound_concentration(inp, literal=True),
            tail_bound_markov(inp, case, "printed"),
            tail_bound_markov(inp, case, "corrected"),
        ):
            if b.applicable:
                add(f"tail_{b.name}", b.value, variant=b.variant, note=f"T={T:g}")
            else:
                na(f"tail_{b.name}", b.note, variant=b.variant)
    else:
        for name in ("tail_concentration", "tail_markov"):
            na(name, why if not coupled else "upper threshold unavailable")

    try:
        g = GammaLawInput.from_constants(c)
        if g.a <= 0:
            raise PreconditionError("needs a > 0")
        res = gamma_law_lower_bound(g)
        note = "" if res.hypothesis_holds else "hypothesis H in (3/4, 1) with independent noise not met"
        add("gamma_law_nu", res.nu)
        add("gamma_law", res.printed_literal, variant="printed_literal", note=note)
        add("gamma_law", res.derivation_literal, variant="derivation_literal", note=note)
    except (PreconditionError, ValueError) as exc:
        na("gamma_law", str(exc))

    if upper_ok and ("L" in cfg.bounds or "l_paths" in cfg.bounds):
        alpha = float(cfg.bounds.get("alpha", 0.5 * (1.0 + p.hurst)))
        if "L" in cfg.bounds:
            L = float(cfg.bounds["L"])
            note = "L supplied"
        else:
            n = int(cfg.bounds["l_paths"])
            est = estimate_L_alpha(p, c, alpha, case, n_paths=n, t_max=T, n_steps=500, seed=int(cfg.bounds.get("l_seed", 0)))
            L = est.value
            add("L_alpha", L, note=f"MC n={n}, se={est.se:.3g}, 2T value={est.value_2x:.6g}")
            note = "L estimated"
        for variant in ("printed", "corrected"):
            b = lower_bound_malliavin(p, c, alpha, L, case, variant)
            add("malliavin_lower", b.value, variant=variant, note=f"alpha={alpha:g}; {note}")
    return rows


def _write_table(rows, header, out_dir, stem, formats):
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if "csv" in formats:
        fn = os.path.join(out_dir, stem + ".csv")
        with open(fn, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
        written.append(fn)
    text = _aligned(rows, header)
    if "txt" in formats:
        fn = os.path.join(out_dir, stem + ".txt")
        with open(fn, "w", encoding="utf-8") as fh:
            fh.write(text)
        written.append(fn)
    return text, written


def _aligned(rows, header):
    cells = [list(header)] + [[_fmt(v) for v in r] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip() for row in cells]
    return "\n".join(lines) + "\n"


def cmd_bounds(cfg, args):
    rows = compute_bounds(cfg)
    text, _ = _write_table(rows, ("quantity", "variant", "value", "status", "note"), args.out or cfg.output_dir, "bounds", cfg.formats)
    sys.stdout.write(text)
    return EXIT_OK


# -- simulate ----------------------------------------------------------------


def cmd_simulate(cfg, args):
    if not cfg.campaigns:
        raise ConfigError("simulate needs at least one campaign", None, cfg.source)
    out = args.out or cfg.output_dir
    os.makedirs(out, exist_ok=True)
    workers = args.threads
    for entry in cfg.campaigns:
        report = run_campaign(entry.spec, workers=workers)
        if "json" in cfg.formats:
            with open(os.path.join(out, f"{entry.name}.json"), "w", encoding="utf-8") as fh:
                fh.write(report.to_json())
        if "csv" in cfg.formats:
            report.write_summary_csv(os.path.join(out, f"{entry.name}_summary.csv"))
        if entry.dump_paths:
            report.write_records_csv(os.path.join(out, f"{entry.name}_paths.csv"))
        print(f"campaign {entry.name}: paths={entry.spec.n_paths} violations={report.total_violations}")
        for key, val in sorted(report.summary.items()):
            if isinstance(val, dict) and "violations" in val:
                print(f"  {key}: violations={val['violations']}")
    return EXIT_OK


# -- validate ----------------------------------------------------------------

VALIDATION_PARAMS = SystemParams(
    beta1=1.0,
    beta2=1.0,
    gamma1=1.0 + 0.125,
    gamma2=1.0 + 0.125,
    k=((0.5, 0.5), (0.5, 0.5)),
    hurst=0.7,
    initial=EigenMultiple(1.0, 1.0),
)

PROFILES = {
    "default": {"fbm_paths": 20_000, "yor_paths": 20_000, "sandwich_paths": 300, "dominance_paths": 2000},
    "quick": {"fbm_paths": 5_000, "yor_paths": 5_000, "sandwich_paths": 100, "dominance_paths": 500},
}


def _sandwich_params(cfg, mutate_rho2=False):
    p = cfg.params
    if p.equal_beta and p.eigen_multiple:
        c = derive_constants(p)
        # the sign canary is a no-op when rho2 vanishes
        if c.coupling_holds and gamma_matches_eigenvalue(p, c.eig) and not (mutate_rho2 and c.rho2 == 0):
            return p
    return VALIDATION_PARAMS


def validation_checks(cfg, seed=0, workers=1, mutate_rho2=False, profile="default"):
    """Run the reduced acceptance subset; yields ``(name, passed, detail)``."""
    sizes = PROFILES[profile]
    # Volterra kernel calibration
    worst = 0.0
    for H in (0.55, 0.7, 0.9):
        for t in (0.5, 1.0, 2.0):
            worst = max(worst, abs(kernel_square_integral(t, H, method="fast") / t ** (2 * H) - 1.0))
    yield "volterra_calibration", worst <= 1e-3, f"max rel err {worst:.2e}"

    # fBm covariance on a 4-point grid
    grid = TimeGrid(1.0, 4)
    n = sizes["fbm_paths"]
    worst = 0.0
    for H in (0.55, 0.7, 0.9):
        x = sample_fbm(grid, H, path_rng(seed, 0), size=n)[:, 1:]
        t = grid.times[1:]
        emp = x.T @ x / n
        ref = fbm_covariance(t[:, None], t[None, :], H)
        se = np.sqrt((ref**2 + np.outer(np.diag(ref), np.diag(ref))) / n)
        worst = max(worst, float(np.max(np.abs(emp - ref) / se)))
    yield "fbm_covariance", worst <= 5.0, f"max |z| {worst:.2f}"

    for nu in (1.0, 2.0):
        s = yor_functional_samples(nu, sizes["yor_paths"], h=0.02, seed=seed, key_offset=1 + int(nu))
        ks = yor_ks_test(s, nu)
        yield f"yor_law_nu{nu:g}", ks.passed, f"KS {ks.statistic:.4f} < {ks.critical:.4f}"

    params = _sandwich_params(cfg, mutate_rho2)
    spec = CampaignSpec(
        params,
        TimeGrid(20.0, 2000),
        sizes["sandwich_paths"],
        master_seed=seed,
        pipelines=(Pipeline.LOWER_STAR, Pipeline.UPPER_1),
        mutate_rho2=mutate_rho2,
    )
    rep = run_campaign(spec, workers=workers)
    v = rep.summary["order_lower_upper"]["violations"]
    yield "sandwich_order", v == 0, f"{v} violations over {spec.n_paths} paths"

    spec = CampaignSpec(
        params,
        TimeGrid(2.0, 400),
        sizes["dominance_paths"],
        master_seed=seed + 1,
        pipelines=(Pipeline.UPPER_1, Pipeline.TAIL_BOUNDS),
        mutate_rho2=mutate_rho2,
    )
    rep = run_campaign(spec, workers=workers)
    tb = rep.summary["tail_bounds"]
    yield "tail_dominance", tb["violations"] == 0, f"empirical {tb['empirical']['estimate']:.4f}; " + ", ".join(
        f"{k}={'ok' if ok else 'FAIL'}" for k, ok in sorted(tb["dominance"].items())
    )


def cmd_validate(cfg, args):
    seed = args.seed if args.seed is not None else int(cfg.validate.get("seed", 0))
    mutate = bool(cfg.validate.get("mutate_rho2", False))
    profile = cfg.validate.get("profile", "default")
    ok = True
    for name, passed, detail in validation_checks(cfg, seed, args.threads, mutate, profile):
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
        ok = ok and passed
    return EXIT_OK if ok else EXIT_VALIDATION


# -- entry point -------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="spdeblowup", description="Blow-up bounds and simulations for a mixed-noise SPDE system.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name, help_ in (
        ("bounds", "evaluate analytic constants and probability bounds"),
        ("simulate", "run Monte Carlo campaigns"),
        ("validate", "run the reduced acceptance checks"),
    ):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, help="JSON experiment config")
        sp.add_argument("--out", help="output directory (overrides output.dir)")
        sp.add_argument("--threads", type=int, default=None, help="worker processes (default: $SPDEBLOWUP_THREADS or 1)")
        sp.add_argument("--seed", type=int, default=None, help="override every campaign seed")
    return parser


COMMANDS = {"bounds": cmd_bounds, "simulate": cmd_simulate, "validate": cmd_validate}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        if args.threads is None:
            args.threads = default_workers()
        elif args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load_config(args.config, seed_override=args.seed)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, PreconditionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        # bad environment values and similar usage problems
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        traceback.print_exc()
        print(f"runtime fault: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
