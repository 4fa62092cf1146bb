"""Declarative experiment configs (JSON).

A config has a ``params`` block, an optional list of ``campaigns``, an
optional ``bounds`` block, an optional ``validate`` block and an ``output``
block. Unknown keys are errors; messages point at the line where the key
appears. See ``docs/config.md`` for the schema.
"""

import json
import math
import re
from dataclasses import dataclass, field

from .errors import DomainError
from .mc import CampaignSpec, Pipeline
from .noise import NoiseCoupling, TimeGrid
from .params import EigenMultiple, SystemParams, Tabulated, eigenpair
from .pde import SolverControls, SpatialMesh


class ConfigError(ValueError):
    """Invalid config; ``line`` is 1-based or ``None``."""

    def __init__(self, message, line=None, source="<config>"):
        self.line = line
        self.source = source
        loc = f"{source}:{line}" if line else source
        super().__init__(f"{loc}: {message}")


PARAM_KEYS = {"beta1", "beta2", "gamma1", "gamma2", "k", "hurst", "coupling", "domain_length", "initial"}
CAMPAIGN_KEYS = {
    "name",
    "t_max",
    "n_steps",
    "n_paths",
    "seed",
    "pipelines",
    "mesh",
    "controls",
    "bound_T",
    "exact_volterra",
    "alpha",
    "l_paths",
    "gamma_oracle_paths",
    "censor_allowance",
    "envelope_margin",
    "envelope_snapshot_every",
    "dump_paths",
}
MESH_KEYS = {"n_cells"}
CONTROL_KEYS = {"theta", "theta_factor", "eta", "substeps", "min_dt", "neg_tol", "snapshot_every"}
BOUNDS_KEYS = {"T", "alpha", "L", "l_paths", "l_seed", "sharp_c"}
VALIDATE_KEYS = {"profile", "seed", "mutate_rho2"}
OUTPUT_KEYS = {"dir", "formats"}
TOP_KEYS = {"params", "campaigns", "bounds", "validate", "output"}
FORMATS = {"csv", "json", "txt"}


@dataclass
class CampaignEntry:
    name: str
    spec: CampaignSpec
    dump_paths: bool = False


@dataclass
class ExperimentConfig:
    params: SystemParams
    campaigns: list = field(default_factory=list)
    bounds: dict = field(default_factory=dict)
    validate: dict = field(default_factory=dict)
    output_dir: str = "out"
    formats: tuple = ("csv", "json", "txt")
    source: str = "<config>"


class _Ctx:
    def __init__(self, text, source):
        self.text = text
        self.source = source

    def line_of(self, key):
        m = re.search(r'"' + re.escape(key) + r'"\s*:', self.text)
        return self.text.count("\n", 0, m.start()) + 1 if m else None

    def fail(self, message, key=None):
        raise ConfigError(message, self.line_of(key) if key else None, self.source)

    def check_keys(self, block, allowed, where):
        if not isinstance(block, dict):
            self.fail(f"{where} must be an object")
        for k in block:
            if k not in allowed:
                self.fail(f"unknown key {k!r} in {where}", k)

    def number(self, block, key, where, default=None, positive=False, integer=False):
        if key not in block:
            if default is None:
                self.fail(f"missing key {key!r} in {where}")
            return default
        v = block[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(f"{where}.{key} must be a number", key)
        if integer and int(v) != v:
            self.fail(f"{where}.{key} must be an integer", key)
        if not math.isfinite(v) or (positive and v <= 0):
            self.fail(f"{where}.{key} must be {'positive' if positive else 'finite'}", key)
        return int(v) if integer else float(v)


def _parse_params(ctx, block):
    ctx.check_keys(block, PARAM_KEYS, "params")
    k = block.get("k")
    if not (isinstance(k, list) and len(k) == 2 and all(isinstance(r, list) and len(r) == 2 for r in k)):
        ctx.fail("params.k must be a 2x2 array [[k11, k12], [k21, k22]]", "k" if "k" in block else None)
    try:
        kk = tuple(tuple(float(v) for v in row) for row in k)
    except (TypeError, ValueError):
        ctx.fail("params.k entries must be numbers", "k")
    L = ctx.number(block, "domain_length", "params", default=math.pi, positive=True)
    gammas = []
    for i, key in ((0, "gamma1"), (1, "gamma2")):
        g = block.get(key)
        if g == "sandwich":
            # gamma_i = lambda + k_i1^2 / 2
            g = eigenpair(L).lam + kk[i][0] ** 2 / 2.0
        else:
            g = ctx.number(block, key, "params")
        gammas.append(g)
    init = block.get("initial", {"type": "eigen", "c1": 1.0, "c2": 1.0})
    if not isinstance(init, dict):
        ctx.fail("params.initial must be an object", "initial")
    kind = init.get("type", "eigen")
    try:
        if kind == "eigen":
            ctx.check_keys(init, {"type", "c1", "c2"}, "params.initial")
            initial = EigenMultiple(ctx.number(init, "c1", "params.initial"), ctx.number(init, "c2", "params.initial"))
        elif kind == "tabulated":
            ctx.check_keys(init, {"type", "x", "f1", "f2"}, "params.initial")
            initial = Tabulated(init["x"], init["f1"], init["f2"])
        else:
            ctx.fail(f"params.initial.type must be 'eigen' or 'tabulated', got {kind!r}", "type")
        coupling = NoiseCoupling.parse(block.get("coupling", "independent"))
        return SystemParams(
            beta1=ctx.number(block, "beta1", "params", positive=True),
            beta2=ctx.number(block, "beta2", "params", positive=True),
            gamma1=gammas[0],
            gamma2=gammas[1],
            k=kk,
            hurst=ctx.number(block, "hurst", "params"),
            coupling=coupling,
            domain_length=L,
            initial=initial,
        )
    except (DomainError, KeyError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        ctx.fail(f"invalid params: {exc}", "params")


def _parse_campaign(ctx, block, idx, params, seed_override):
    where = f"campaigns[{idx}]"
    ctx.check_keys(block, CAMPAIGN_KEYS, where)
    pipes = block.get("pipelines", ["lower_star", "upper_1"])
    if not isinstance(pipes, list) or not pipes:
        ctx.fail(f"{where}.pipelines must be a nonempty list", "pipelines")
    valid = {p.value for p in Pipeline}
    for p in pipes:
        if p not in valid:
            ctx.fail(f"unknown pipeline {p!r}; choose from {sorted(valid)}", "pipelines")
    grid = TimeGrid(
        ctx.number(block, "t_max", where, positive=True),
        ctx.number(block, "n_steps", where, positive=True, integer=True),
    )
    mesh = controls = None
    if "mesh" in block:
        ctx.check_keys(block["mesh"], MESH_KEYS, f"{where}.mesh")
        mesh = SpatialMesh(params.domain_length, ctx.number(block["mesh"], "n_cells", f"{where}.mesh", integer=True))
    if "controls" in block:
        ctx.check_keys(block["controls"], CONTROL_KEYS, f"{where}.controls")
        kw = {}
        for key, v in block["controls"].items():
            integer = key in ("substeps", "snapshot_every")
            kw[key] = ctx.number(block["controls"], key, f"{where}.controls", integer=integer)
        controls = SolverControls(**kw)
    seed = ctx.number(block, "seed", where, default=0, integer=True) if "seed" in block else 0
    if seed_override is not None:
        seed = int(seed_override)
    opt = {}
    for key in ("bound_T", "alpha", "censor_allowance", "envelope_margin"):
        if key in block:
            opt[key] = ctx.number(block, key, where)
    for key in ("l_paths", "gamma_oracle_paths", "envelope_snapshot_every"):
        if key in block:
            opt[key] = ctx.number(block, key, where, positive=True, integer=True)
    if "exact_volterra" in block:
        opt["exact_volterra"] = bool(block["exact_volterra"])
    spec = CampaignSpec(
        params=params,
        grid=grid,
        n_paths=ctx.number(block, "n_paths", where, positive=True, integer=True),
        master_seed=seed,
        pipelines=tuple(pipes),
        mesh=mesh,
        controls=controls,
        **opt,
    )
    name = block.get("name", f"campaign{idx}")
    if not isinstance(name, str) or not re.fullmatch(r"[A-Za-z0-9_.-]+", name):
        ctx.fail(f"{where}.name must match [A-Za-z0-9_.-]+", "name")
    return CampaignEntry(name, spec, bool(block.get("dump_paths", False)))


def parse_config(text, source="<config>", seed_override=None):
    """Parse config text into an :class:`ExperimentConfig`."""
    ctx = _Ctx(text, source)
    if not text.strip():
        raise ConfigError("config is empty", None, source)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno, source) from None
    ctx.check_keys(raw, TOP_KEYS, "config")
    if "params" not in raw:
        ctx.fail("missing 'params' block")
    params = _parse_params(ctx, raw["params"])
    camps = raw.get("campaigns", [])
    if not isinstance(camps, list):
        ctx.fail("campaigns must be a list", "campaigns")
    entries = []
    try:
        for i, c in enumerate(camps):
            entries.append(_parse_campaign(ctx, c, i, params, seed_override))
    except (DomainError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        ctx.fail(f"invalid campaign: {exc}", "campaigns")
    names = [e.name for e in entries]
    if len(set(names)) != len(names):
        ctx.fail("campaign names must be unique", "name")
    bounds = raw.get("bounds", {})
    ctx.check_keys(bounds, BOUNDS_KEYS, "bounds")
    for key in bounds:
        ctx.number(bounds, key, "bounds")
    validate = raw.get("validate", {})
    ctx.check_keys(validate, VALIDATE_KEYS, "validate")
    if validate.get("profile", "default") not in ("default", "quick"):
        ctx.fail("validate.profile must be 'default' or 'quick'", "profile")
    out = raw.get("output", {})
    ctx.check_keys(out, OUTPUT_KEYS, "output")
    formats = out.get("formats", ["csv", "json", "txt"])
    if not isinstance(formats, list) or any(f not in FORMATS for f in formats):
        ctx.fail(f"output.formats must be a list drawn from {sorted(FORMATS)}", "formats")
    out_dir = out.get("dir", "out")
    if not isinstance(out_dir, str) or not out_dir:
        ctx.fail("output.dir must be a nonempty string", "dir")
    return ExperimentConfig(params, entries, dict(bounds), dict(validate), out_dir, tuple(formats), source)


def load_config(filename, seed_override=None):
    try:
        with open(filename, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(filename)) from None
    return parse_config(text, str(filename), seed_override)
