"""Seeded Monte Carlo campaigns over sample paths.

Path ``i`` of a campaign draws its noise from ``path_rng(master_seed, i)``,
workers receive disjoint contiguous blocks of path indices, and records are
sorted by index before aggregation. Sums use ``math.fsum``. The JSON report
therefore does not depend on the number of workers.
"""

import csv
import enum
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from ._backend import active_backend
from .errors import DomainError, NonPositivity, PreconditionError, StepCollapse
from .noise import TimeGrid, path_rng, sample_path
from .params import derive_constants, gamma_matches_eigenvalue
from .pde import SolverControls, SpatialMesh, check_global_envelope, solve_random_pde
from .prob import (
    GammaLawInput,
    TailBoundInput,
    estimate_L_alpha,
    gamma_law_lower_bound,
    gamma_law_mc_oracle,
    lower_bound_malliavin,
    tail_bound_concentration,
    tail_bound_markov,
)
from .stopping import (
    ExpFunctionalSpec,
    crossing_time,
    tau_double_star,
    tau_lower_star,
    tau_prime,
    tau_upper_1,
    tau_upper_2,
    tau_upper_general,
)

THREADS_ENV = "SPDEBLOWUP_THREADS"
Z95 = 1.96
# stream offsets keep auxiliary Monte Carlo draws apart from the path streams
GAMMA_ORACLE_KEY = 2**40
L_ALPHA_KEY = 2**41


class Pipeline(enum.Enum):
    LOWER_STAR = "lower_star"
    UPPER_1 = "upper_1"
    UPPER_2 = "upper_2"
    DOUBLE_STAR = "double_star"
    PRIME = "prime"
    UPPER_GENERAL = "upper_general"
    PDE_SANDWICH = "pde_sandwich"
    ENVELOPE = "envelope"
    TAIL_BOUNDS = "tail_bounds"
    GAMMA_LAW = "gamma_law"
    MALLIAVIN_LOWER = "malliavin_lower"


STOPPING_KEYS = {
    Pipeline.LOWER_STAR: "tau_star",
    Pipeline.UPPER_1: "tau_u1",
    Pipeline.UPPER_2: "tau_u2",
    Pipeline.DOUBLE_STAR: "tau_double_star",
    Pipeline.PRIME: "tau_prime",
    Pipeline.UPPER_GENERAL: "tau_upper_general",
}


@dataclass(frozen=True)
class CampaignSpec:
    """Everything that determines a campaign's report.

    Parameters
    ----------
    params : SystemParams
    grid : TimeGrid
        Path grid; its end is the censoring horizon.
    n_paths, master_seed : int
    pipelines : tuple of Pipeline or str
    mesh, controls : optional
        PDE mesh and solver controls, used by the PDE pipelines.
    bound_T : float, optional
        Time ``T`` in the tail bounds; defaults to the grid end.
    exact_volterra : bool
        Passed to the noise sampler for the Volterra coupling.
    alpha : float, optional
        Exponent of the Malliavin bound; defaults to ``(1 + H) / 2``.
    l_paths : int
        Paths used for the ``L(alpha)`` estimate.
    gamma_oracle_paths : int
        Paths used by the Gamma-law Monte Carlo oracle.
    censor_allowance : float
        Added to the empirical probability in the Gamma-law dominance check.
    envelope_margin : float
        The envelope is tested on paths whose condition value stays below
        ``1 - envelope_margin``.
    envelope_snapshot_every : int
    mutate_rho2 : bool
        Test hook: flips the sign of the ``B^H`` coefficient in the
        upper-bound functional so the sandwich checks must fail.
    """

    params: object
    grid: TimeGrid
    n_paths: int
    master_seed: int = 0
    pipelines: tuple = (Pipeline.LOWER_STAR, Pipeline.UPPER_1)
    mesh: object = None
    controls: object = None
    bound_T: float = None
    exact_volterra: bool = True
    alpha: float = None
    l_paths: int = 200
    gamma_oracle_paths: int = 100_000
    censor_allowance: float = 0.0
    envelope_margin: float = 0.5
    envelope_snapshot_every: int = 16
    mutate_rho2: bool = False

    def __post_init__(self):
        if int(self.n_paths) < 1:
            raise ValueError("n_paths must be >= 1")
        pipes = tuple(sorted({Pipeline(p) for p in self.pipelines}, key=lambda p: list(Pipeline).index(p)))
        object.__setattr__(self, "pipelines", pipes)
        object.__setattr__(self, "n_paths", int(self.n_paths))

    @property
    def horizon(self):
        return self.grid.t_max

    @property
    def T(self):
        return self.horizon if self.bound_T is None else float(self.bound_T)

    def has(self, pipe):
        return pipe in self.pipelines


def check_preconditions(spec, consts=None):
    """Raise :class:`PreconditionError` if a requested pipeline cannot run."""
    p = spec.params
    consts = consts or derive_constants(p)
    pipes = set(spec.pipelines)
    needs_coupling = {Pipeline.LOWER_STAR, Pipeline.UPPER_1, Pipeline.UPPER_2, Pipeline.TAIL_BOUNDS, Pipeline.GAMMA_LAW, Pipeline.MALLIAVIN_LOWER}
    if pipes & needs_coupling:
        consts.require_coupling()
    needs_eigen = {Pipeline.LOWER_STAR, Pipeline.DOUBLE_STAR, Pipeline.PRIME, Pipeline.ENVELOPE}
    if pipes & needs_eigen and not p.eigen_multiple:
        raise PreconditionError("requested pipelines need eigen-multiple initial data")
    needs_gamma = {Pipeline.LOWER_STAR, Pipeline.DOUBLE_STAR, Pipeline.PRIME, Pipeline.ENVELOPE}
    if pipes & needs_gamma and not gamma_matches_eigenvalue(p, consts.eig):
        raise PreconditionError("requested pipelines need gamma_i = lambda + k_i1^2 / 2")
    if Pipeline.UPPER_1 in pipes and not p.equal_beta:
        raise PreconditionError("upper_1 needs beta1 == beta2")
    if Pipeline.UPPER_2 in pipes:
        if p.beta1 <= p.beta2:
            raise PreconditionError("upper_2 needs beta1 > beta2")
        consts.thresholds.require_u2()
    if Pipeline.UPPER_GENERAL in pipes and not p.equal_beta:
        consts.thresholds.require_u2()
    if Pipeline.PDE_SANDWICH in pipes:
        if not p.eigen_multiple:
            raise PreconditionError("the PDE sandwich needs eigen-multiple initial data")
        if not p.equal_beta:
            consts.thresholds.require_u2()
    if Pipeline.GAMMA_LAW in pipes:
        try:
            GammaLawInput.from_constants(consts)
        except DomainError as exc:
            raise PreconditionError(f"gamma_law: {exc}") from None
    return consts


def _upper_estimate(path, spec, consts):
    p = spec.params
    if not spec.mutate_rho2:
        return tau_upper_1(path, consts) if p.equal_beta else tau_upper_2(path, consts)
    drift = -(consts.a if p.equal_beta else consts.a1)
    theta = consts.thresholds.theta_u1 if p.equal_beta else consts.thresholds.require_u2()
    return crossing_time(path, ExpFunctionalSpec(consts.rho1, -consts.rho2, drift), theta)


def _est_fields(rec, key, est):
    rec[key] = est.t_hat if est.crossed else math.nan
    rec[key + "_crossed"] = bool(est.crossed)
    rec[key + "_saturated"] = bool(est.saturated)


def _run_path(spec, consts, i):
    p = spec.params
    path = sample_path(spec.grid, p.hurst, p.coupling, path_rng(spec.master_seed, i), exact_volterra=spec.exact_volterra)
    rec = {"index": i}
    if spec.has(Pipeline.LOWER_STAR) or spec.has(Pipeline.PDE_SANDWICH):
        _est_fields(rec, "tau_star", tau_lower_star(path, consts, check_gamma=spec.has(Pipeline.LOWER_STAR)))
    want_upper = {Pipeline.UPPER_1, Pipeline.UPPER_2, Pipeline.PDE_SANDWICH, Pipeline.TAIL_BOUNDS, Pipeline.GAMMA_LAW, Pipeline.MALLIAVIN_LOWER}
    if want_upper & set(spec.pipelines):
        key = "tau_u1" if p.equal_beta else "tau_u2"
        _est_fields(rec, key, _upper_estimate(path, spec, consts))
    if spec.has(Pipeline.DOUBLE_STAR) or spec.has(Pipeline.PRIME):
        _est_fields(rec, "tau_double_star", tau_double_star(path, p, consts))
    if spec.has(Pipeline.PRIME):
        _est_fields(rec, "tau_prime", tau_prime(path, p, consts))
    if spec.has(Pipeline.UPPER_GENERAL):
        _est_fields(rec, "tau_upper_general", tau_upper_general(path, p, consts, "equal" if p.equal_beta else "strict"))
    if spec.has(Pipeline.PDE_SANDWICH) or spec.has(Pipeline.ENVELOPE):
        mesh = spec.mesh or SpatialMesh(p.domain_length)
        controls = spec.controls or SolverControls()
        if spec.has(Pipeline.ENVELOPE) and controls.snapshot_every == 0:
            controls = SolverControls(**{**controls.__dict__, "snapshot_every": spec.envelope_snapshot_every})
        rec["pde_status"] = "ok"
        rec["t_blow"] = math.nan
        rec["t_blow_hi"] = math.nan
        try:
            traj = solve_random_pde(p, consts, path, mesh, controls)
        except NonPositivity:
            rec["pde_status"] = "nonpositive"
            traj = None
        except StepCollapse:
            rec["pde_status"] = "collapse"
            traj = None
        if traj is not None:
            rec["t_blow"] = traj.t_blow
            rec["t_blow_hi"] = traj.t_blow_hi
            if spec.has(Pipeline.ENVELOPE):
                env = check_global_envelope(traj, p, consts, path, margin=spec.envelope_margin)
                rec["env_condition"] = max(env.condition)
                rec["env_satisfied"] = env.satisfied
                rec["env_ratio"] = env.max_ratio
                rec["env_holds"] = bool(env.envelope_holds) if env.satisfied else None
    return rec


def _run_block(spec, indices):
    consts = derive_constants(spec.params)
    return [_run_path(spec, consts, int(i)) for i in indices]


def default_workers():
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    n = int(raw)
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer")
    return n


def _blocks(n, workers):
    size = max(1, math.ceil(n / (4 * workers)))
    return [range(s, min(s + size, n)) for s in range(0, n, size)]


def run_records(spec, workers=None):
    """Per-path records sorted by path index."""
    workers = default_workers() if workers is None else int(workers)
    if workers < 1:
        raise ValueError("workers must be >= 1")
    blocks = _blocks(spec.n_paths, workers)
    if workers == 1:
        out = [r for b in blocks for r in _run_block(spec, b)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futures = [ex.submit(_run_block, spec, b) for b in blocks]
            out = [r for f in futures for r in f.result()]
    out.sort(key=lambda r: r["index"])
    return out


# -- statistics --------------------------------------------------------------


def aggregate(samples, kind):
    """Summary statistics of per-path samples.

    ``kind="probability"``: ``samples`` are booleans; returns the estimate,
    ``SE = sqrt(p (1 - p) / n)`` and the 95% normal interval.
    ``kind="time"``: ``samples`` are crossing times with ``nan`` (or
    ``None``) for censored paths; mean and sample SD use crossed paths only.
    """
    if len(samples) == 0:
        raise ValueError("aggregate needs at least one sample")
    n = len(samples)
    if kind == "probability":
        k = sum(1 for s in samples if s)
        p = k / n
        se = math.sqrt(p * (1.0 - p) / n)
        return {"n": n, "events": k, "estimate": p, "se": se, "ci95": [p - Z95 * se, p + Z95 * se]}
    if kind == "time":
        vals = [float(s) for s in samples if s is not None and not math.isnan(s)]
        m = len(vals)
        out = {"n": n, "crossed": m, "censored": n - m, "censoring_rate": (n - m) / n}
        if m:
            mean = math.fsum(vals) / m
            out["mean"] = mean
            out["sd"] = math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / (m - 1)) if m > 1 else 0.0
        else:
            out["mean"] = None
            out["sd"] = None
        return out
    raise ValueError(f"unknown kind {kind!r}")


def _bound_dict(b):
    return {"value": b.value, "applicable": b.applicable, "note": b.note, "diagnostics": b.diagnostics}


def _stopping_summary(records, key, T):
    times = [r[key] for r in records]
    out = aggregate(times, "time")
    prob = aggregate([r[key + "_crossed"] and r[key] <= T for r in records], "probability")
    out["p_le_T"] = prob
    out["saturated"] = sum(1 for r in records if r[key + "_saturated"])
    return out


def _sandwich(records, spec, consts):
    p = spec.params
    mesh = spec.mesh or SpatialMesh(p.domain_length)
    dt = spec.grid.dt
    upper_key = "tau_u1" if p.equal_beta else "tau_u2"
    blown = [r for r in records if not math.isnan(r["t_blow"])]
    violations = []
    for r in blown:
        tb = r["t_blow"]
        delta = 5.0 * max(dt, mesh.dx**2) * tb
        lo = r["tau_star"] if r["tau_star_crossed"] else math.inf
        hi = r[upper_key] if r[upper_key + "_crossed"] else math.inf
        if tb < lo - delta or tb > hi + delta:
            violations.append(r["index"])
    theta_rel = [abs(r["t_blow_hi"] - r["t_blow"]) for r in blown if not math.isnan(r["t_blow_hi"])]
    return {
        "n": len(records),
        "blowups": len(blown),
        "blowup_rate": len(blown) / len(records),
        "violations": len(violations),
        "violating_paths": violations,
        "faults": {
            "nonpositive": sum(1 for r in records if r["pde_status"] == "nonpositive"),
            "collapse": sum(1 for r in records if r["pde_status"] == "collapse"),
        },
        "theta_sensitivity_max": max(theta_rel) if theta_rel else None,
    }


def _envelope(records):
    sat = [r for r in records if r.get("env_satisfied")]
    ratios = [r["env_ratio"] for r in sat]
    return {
        "n": len(records),
        "condition_satisfied": len(sat),
        "blowups_when_satisfied": sum(1 for r in sat if not math.isnan(r["t_blow"])),
        "envelope_violations": sum(1 for r in sat if not r["env_holds"]),
        "max_ratio": max(ratios) if ratios else None,
    }


def _ordering(records, lo_key, hi_key, require_lo_if_hi=False):
    # counts paths where the lower stopping time exceeds the upper one
    bad = []
    for r in records:
        lo_c, hi_c = r[lo_key + "_crossed"], r[hi_key + "_crossed"]
        if hi_c and lo_c and r[lo_key] > r[hi_key]:
            bad.append(r["index"])
        elif require_lo_if_hi and hi_c and not lo_c:
            bad.append(r["index"])
    return {"violations": len(bad), "violating_paths": bad}


def _tail_bounds(spec, consts, records):
    p = spec.params
    case = "equal" if p.equal_beta else "strict"
    key = "tau_u1" if p.equal_beta else "tau_u2"
    inp = TailBoundInput.from_constants(consts, spec.T, case)
    bounds = {
        "concentration": tail_bound_concentration(inp),
        "concentration_literal": tail_bound_concentration(inp, literal=True),
        "markov_printed": tail_bound_markov(inp, case, "printed"),
        "markov_corrected": tail_bound_markov(inp, case, "corrected"),
    }
    emp = aggregate([r[key + "_crossed"] and r[key] <= spec.T for r in records], "probability")
    dom = {}
    for name, b in bounds.items():
        if b.applicable:
            dom[name] = emp["estimate"] <= b.value + 3.0 * emp["se"]
    return {
        "T": spec.T,
        "case": case,
        "empirical": emp,
        "bounds": {k: _bound_dict(v) for k, v in bounds.items()},
        "dominance": dom,
        "violations": sum(1 for ok in dom.values() if not ok),
    }


def _gamma_law(spec, consts, records):
    inp = GammaLawInput.from_constants(consts)
    res = gamma_law_lower_bound(inp)
    oracle = gamma_law_mc_oracle(inp, n_paths=spec.gamma_oracle_paths, seed=spec.master_seed, key_offset=GAMMA_ORACLE_KEY)
    emp = aggregate([r["tau_u1_crossed"] for r in records], "probability")
    if oracle.validated in ("derivation", "both"):
        validated, value = "derivation", res.derivation_literal
    elif oracle.validated == "printed":
        validated, value = "printed", res.printed_literal
    else:
        validated, value = None, None
    ok = None
    if value is not None:
        ok = emp["estimate"] + spec.censor_allowance >= value - 3.0 * emp["se"]
    return {
        "nu": res.nu,
        "printed_literal": res.printed_literal,
        "derivation_literal": res.derivation_literal,
        "variants_differ": res.discrepancy,
        "hypothesis_holds": res.hypothesis_holds,
        "oracle": {"estimate": oracle.estimate, "se": oracle.se, "horizon": oracle.horizon, "within": oracle.within},
        "validated_variant": validated,
        "empirical": emp,
        "censor_allowance": spec.censor_allowance,
        "dominance": ok,
        "violations": 0 if ok else 1,
    }


def _malliavin(spec, consts, records):
    p = spec.params
    case = "equal" if p.equal_beta else "strict"
    key = "tau_u1" if p.equal_beta else "tau_u2"
    alpha = spec.alpha if spec.alpha is not None else 0.5 * (1.0 + p.hurst)
    dt = spec.grid.dt
    n_steps = max(1, int(round(spec.horizon / dt)))
    est = estimate_L_alpha(p, consts, alpha, case, spec.l_paths, spec.horizon, n_steps, spec.master_seed, key_offset=L_ALPHA_KEY)
    printed = lower_bound_malliavin(p, consts, alpha, est.value, case, "printed")
    corrected = lower_bound_malliavin(p, consts, alpha, est.value, case, "corrected")
    emp = aggregate([r[key + "_crossed"] for r in records], "probability")
    return {
        "alpha": alpha,
        "L": {"value": est.value, "se": est.se, "raw": est.raw, "value_2x": est.value_2x, "raw_2x": est.raw_2x, "n_paths": est.n_paths},
        "bounds": {"printed": _bound_dict(printed), "corrected": _bound_dict(corrected)},
        "empirical": emp,
        "dominance": {
            "printed": emp["estimate"] >= printed.value - 3.0 * emp["se"],
            "corrected": emp["estimate"] >= corrected.value - 3.0 * emp["se"],
        },
    }


def _jsonable(x):
    if isinstance(x, float):
        return None if math.isnan(x) else x
    if isinstance(x, (np.floating,)):
        return _jsonable(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


@dataclass
class CampaignReport:
    """Aggregated campaign output.

    ``summary`` maps pipeline names to their statistics; ``records`` holds
    the per-path rows; ``meta`` records seed, grid, sizes and version.
    """

    meta: dict
    summary: dict
    records: list = field(repr=False, default_factory=list)

    def to_dict(self):
        return _jsonable({"meta": self.meta, "summary": self.summary})

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"

    @property
    def total_violations(self):
        total = 0
        for v in self.summary.values():
            if isinstance(v, dict) and isinstance(v.get("violations"), int):
                total += v["violations"]
        return total

    def summary_rows(self):
        """Flat ``(pipeline, quantity, value)`` rows for a CSV table."""
        rows = []

        def walk(prefix, obj):
            if isinstance(obj, dict):
                for k in sorted(obj):
                    walk(f"{prefix}.{k}" if prefix else str(k), obj[k])
            elif isinstance(obj, list):
                rows.append((prefix, ";".join(_fmt(v) for v in obj)))
            else:
                rows.append((prefix, _fmt(obj)))

        walk("", _jsonable(self.summary))
        return [(name.split(".", 1)[0], name.split(".", 1)[1] if "." in name else "", val) for name, val in rows]

    def write_summary_csv(self, filename):
        with open(filename, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["pipeline", "quantity", "value"])
            w.writerows(self.summary_rows())

    def write_records_csv(self, filename):
        if not self.records:
            return
        cols = sorted({k for r in self.records for k in r} - {"index"})
        with open(filename, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", *cols])
            for r in self.records:
                w.writerow([r["index"], *(_fmt(r.get(c)) for c in cols)])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, float):
        return "" if math.isnan(v) else f"{v:.17g}"
    return str(v)


def run_campaign(spec, workers=None):
    """Run every requested pipeline over ``spec.n_paths`` paths."""
    consts = check_preconditions(spec)
    records = run_records(spec, workers)
    p = spec.params
    summary = {}
    for pipe, key in STOPPING_KEYS.items():
        # stopping times computed as inputs to other pipelines are summarized too
        if key in records[0]:
            summary[pipe.value] = _stopping_summary(records, key, spec.T)
    upper_key = "tau_u1" if p.equal_beta else "tau_u2"
    if spec.has(Pipeline.LOWER_STAR) and upper_key in records[0]:
        summary["order_lower_upper"] = _ordering(records, "tau_star", upper_key)
    if spec.has(Pipeline.PRIME):
        summary["order_prime_double_star"] = _ordering(records, "tau_prime", "tau_double_star", require_lo_if_hi=True)
    if spec.has(Pipeline.PDE_SANDWICH):
        summary[Pipeline.PDE_SANDWICH.value] = _sandwich(records, spec, consts)
    if spec.has(Pipeline.ENVELOPE):
        summary[Pipeline.ENVELOPE.value] = _envelope(records)
    if spec.has(Pipeline.TAIL_BOUNDS):
        summary[Pipeline.TAIL_BOUNDS.value] = _tail_bounds(spec, consts, records)
    if spec.has(Pipeline.GAMMA_LAW):
        summary[Pipeline.GAMMA_LAW.value] = _gamma_law(spec, consts, records)
    if spec.has(Pipeline.MALLIAVIN_LOWER):
        summary[Pipeline.MALLIAVIN_LOWER.value] = _malliavin(spec, consts, records)
    meta = {
        "version": __version__,
        "backend": active_backend(),
        "master_seed": spec.master_seed,
        "n_paths": spec.n_paths,
        "grid": {"t_max": spec.grid.t_max, "n_steps": spec.grid.n_steps},
        "pipelines": [pp.value for pp in spec.pipelines],
        "hurst": p.hurst,
        "coupling": p.coupling.value,
        "mutate_rho2": spec.mutate_rho2,
    }
    if spec.mesh is not None:
        meta["mesh"] = {"domain_length": spec.mesh.domain_length, "n_cells": spec.mesh.n_cells}
    return CampaignReport(meta, summary, records)
