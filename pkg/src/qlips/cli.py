"""Command-line front end: runs builtin examples or config-defined sweeps.

A run executes the two-step pipeline (randomized-network initialization
solve, then the perturbation-correction solve unless disabled) on one of
the builtin examples and writes plot-ready artifacts into an output
directory:

    report.json             solver reports, error metrics, resolved config
    residual_history.csv    per-iteration residual norms for both stages
    errors_table.csv        relative L2/Linf errors per stage and subdomain
    heatmap_init.csv        grid field + pointwise error after initialization
    heatmap_corrected.csv   grid field + pointwise error after correction
    interface_trace.csv     one-sided error and scaled correction along the
                            interface

Configuration is a single TOML file plus flag overrides (flags win).
Every key has a default; unknown keys are rejected.  Recognized sections
and keys, with their fallback defaults (per-example defaults in
``EXAMPLE_DEFAULTS`` override these):

    example = "ex1"            # ex1 .. ex6
    seed = 0                   # master seed, derives all stage seeds
    out = "runs"               # output root; QLIPS_OUT is the env fallback

    [init]                     # initialization-stage networks
    m = 100
    activation = "tanh"
    weight_range = [-1.0, 1.0]
    bias_range = [-0.1, 0.1]
    seed = 0                   # optional; default: master seed
                               # (net for subdomain s uses seed + s)

    [collocation]              # initialization-stage sample counts
    interior_plus = 4000
    interior_minus = 4000
    interface = 800
    boundary = 1600
    weights = [1.0, 1.0, 1.0, 1.0, 1.0]
                               # residual-group weights in the order
                               # interior+, interior-, value jump, flux
                               # jump, boundary; when unset they balance
                               # the example (unit except ex4, which
                               # cancels the contrast factor)
    seed = 1000                # optional; default: master seed + 1000

    [correction]
    enabled = true
    m_p = 400
    activation = "sin"
    weight_range = [-6.28.., 6.28..]
    bias_range = [-3.14.., 3.14..]
    keep_second_order = true
    rounds = 1
    seed = 2000                # optional; default: master seed + 2000

    [correction.collocation]   # correction-stage sample counts; defaults
    interior_plus = ...        # to the [collocation] counts with seed
    ...                        # master seed + 3000

    [solver]
    max_iters = 100
    svd_threshold = 1e-14
    stop_tol = 1e-8
    damping = 1.0
    backtrack = false          # halve steps that grow the residual

    [problem]                  # example-specific parameters
    contrast = 1e8             # ex4 only
    petals = 5                 # ex3 only
    time_horizon = 0.2         # ex5 only

    [report]
    grid = [201, 201]          # test-grid resolution; [nx, ny, nt] for ex5
    trace_samples = 400

    [sweep]                    # presence of this section selects sweep mode
    axis = "mp"                # one of: mp, contrast, petals, seed
    values = [100, 200, 400]
    jobs = 1

A sweep repeats the run once per value, each run in its own subdirectory
``<axis>=<value>``, and aggregates one row per value into
``sweep_table.csv``.  Per-run failures are recorded in their row and the
sweep continues.  A seed sweep replaces the master seed per row, so all
derived stage seeds move with it; explicitly pinned section seeds stay
fixed.

Exit codes: 0 success, 2 config or file-system error, 3 numerical
failure, 4 divergence.  CSV floats are written with '%.17g', so
re-running an identical config byte-reproduces every CSV.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import copy
import csv
import dataclasses
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # 3.10
    import tomli as tomllib

from . import assembly, basis, metrics, perturbation, solver
from . import geometry as geo
from . import problem as pm
from .errors import ConfigError, NumericalError

SCHEMA_VERSION = 1
FLOAT_FMT = "%.17g"
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_DIVERGED = 4
SWEEP_AXES = ("mp", "contrast", "petals", "seed")
RUN_FILES = ("report.json", "residual_history.csv", "errors_table.csv",
             "heatmap_init.csv", "heatmap_corrected.csv",
             "interface_trace.csv")

_PI = math.pi

# Fallback defaults for every key; EXAMPLE_DEFAULTS overlays these, the
# config file overlays that, flags win.
_BASE_DEFAULTS: dict = {
    "example": "ex1",
    "seed": 0,
    "out": None,  # resolved against QLIPS_OUT / "runs" + example id
    "init": {
        "m": 100,
        "activation": "tanh",
        "weight_range": [-1.0, 1.0],
        "bias_range": [-0.1, 0.1],
        "seed": None,
    },
    "collocation": {
        "interior_plus": 4000,
        "interior_minus": 4000,
        "interface": 800,
        "boundary": 1600,
        "weights": None,  # None picks the example's balanced weights
        "seed": None,
    },
    "correction": {
        "enabled": True,
        "m_p": 400,
        "activation": "sin",
        "weight_range": [-2.0 * _PI, 2.0 * _PI],
        "bias_range": [-_PI, _PI],
        "keep_second_order": True,
        "rounds": 1,
        "seed": None,
        "collocation": None,  # defaults to the init-stage counts
    },
    "solver": {
        # tighter than the library default: at 1e-12 the truncation clips
        # directions the fine-scale fit needs (rank 199/200 on ex1)
        "svd_threshold": 1e-14,
        "max_iters": 100,
        "stop_tol": 1e-8,
        "damping": 1.0,
        "backtrack": False,
    },
    "problem": {},
    "report": {
        "grid": None,  # metrics default: (201,201) or (101,101,11)
        "trace_samples": 400,
    },
}

# Per-example tuning.  ex1 keeps the large reference configuration (the
# correction stage solves a 35,752-row system); the others are sized so a
# default run finishes in seconds while still leaving the correction
# several orders below the initialization error.
EXAMPLE_DEFAULTS: dict = {
    "ex1": {
        "init": {"m": 100, "activation": "tanh",
                 "weight_range": [-1.0, 1.0], "bias_range": [-0.1, 0.1]},
        "collocation": {"interior_plus": 8000, "interior_minus": 8000,
                        "interface": 1200, "boundary": 3416},
        "correction": {
            "m_p": 600,
            # the initialization error carries frequencies the default
            # two-period sine range cannot reach; 4pi closes the gap
            "weight_range": [-4.0 * _PI, 4.0 * _PI],
            "collocation": {"interior_plus": 13000, "interior_minus": 13000,
                            "interface": 2000, "boundary": 5752},
        },
    },
    "ex2": {
        "init": {"m": 100},
        "collocation": {"interior_plus": 3000, "interior_minus": 3000,
                        "interface": 1200, "boundary": 1600},
        "correction": {
            "m_p": 400,
            "collocation": {"interior_plus": 5000, "interior_minus": 5000,
                            "interface": 2000, "boundary": 2400},
        },
    },
    "ex3": {
        "init": {"m": 400},
        "collocation": {"interior_plus": 6000, "interior_minus": 6000,
                        "interface": 1600, "boundary": 2400},
        "correction": {
            "m_p": 700,
            "weight_range": [-7.0 * _PI, 7.0 * _PI],
            "bias_range": [-_PI, _PI],
            "collocation": {"interior_plus": 9000, "interior_minus": 9000,
                            "interface": 2400, "boundary": 3200},
        },
        # the petal correction system carries a long tail of near-zero
        # singular values; the tight global cut keeps them and the noise
        # floors the corrected error three orders above what the basis
        # can reach
        "solver": {"svd_threshold": 1e-12},
        "problem": {"petals": 5},
    },
    "ex4": {
        "init": {"m": 100},
        "collocation": {"interior_plus": 3000, "interior_minus": 3000,
                        "interface": 800, "boundary": 1200},
        "correction": {
            "m_p": 400,
            "collocation": {"interior_plus": 5000, "interior_minus": 5000,
                            "interface": 1200, "boundary": 2000},
        },
        "problem": {"contrast": 1e8},
    },
    "ex5": {
        # space-time nets cover three coordinates; both stages need the
        # extra features (m_p=1200 reaches 2.3e-5 but doubles the runtime)
        "init": {"m": 500},
        "collocation": {"interior_plus": 5000, "interior_minus": 5000,
                        "interface": 1200, "boundary": 2400},
        "correction": {
            "m_p": 800,
            "collocation": {"interior_plus": 8000, "interior_minus": 8000,
                            "interface": 2000, "boundary": 3600},
        },
        "problem": {"time_horizon": 0.2},
        "report": {"grid": [101, 101, 11]},
    },
    "ex6": {
        "init": {"m": 150},
        "collocation": {"interior_plus": 5000, "interior_minus": 5000,
                        "interface": 1000, "boundary": 2000},
        "correction": {
            "m_p": 400,
            # the plateau left by the gradient-diffusion fit needs the
            # wider frequency band, same as ex1
            "weight_range": [-4.0 * _PI, 4.0 * _PI],
            "collocation": {"interior_plus": 5000, "interior_minus": 5000,
                            "interface": 1200, "boundary": 2000},
        },
        # the gradient-dependent diffusion makes the first full update
        # overshoot by orders of magnitude before settling; monotone
        # backtracking rides it out
        "solver": {"backtrack": True},
    },
}

# Allowed keys per config table; None marks scalar leaves, dicts nest.
_COLLOC_KEYS = {"interior_plus", "interior_minus", "interface", "boundary",
                "weights", "seed"}
_SCHEMA: dict = {
    "example": None,
    "seed": None,
    "out": None,
    "init": {"m", "activation", "weight_range", "bias_range", "seed"},
    "collocation": _COLLOC_KEYS,
    "correction": {"enabled", "m_p", "activation", "weight_range",
                   "bias_range", "keep_second_order", "rounds", "seed",
                   "collocation"},
    "solver": {"max_iters", "svd_threshold", "stop_tol", "damping",
               "backtrack"},
    "problem": {"contrast", "petals", "time_horizon"},
    "report": {"grid", "trace_samples"},
    "sweep": {"axis", "values", "jobs"},
}


# ---------------------------------------------------------------------------
# config plumbing

def _check_keys(cfg: dict, path: str = "") -> None:
    """Reject any key not in the schema, with its dotted path."""
    for key, val in cfg.items():
        here = f"{path}{key}"
        if path == "":
            if key not in _SCHEMA:
                raise ConfigError(f"unknown config key '{here}'")
            allowed = _SCHEMA[key]
            if allowed is None:
                continue
            if not isinstance(val, dict):
                raise ConfigError(f"config section '{here}' must be a table")
            for sub, subval in val.items():
                if sub not in allowed:
                    raise ConfigError(f"unknown config key '{here}.{sub}'")
                if sub == "collocation":
                    if not isinstance(subval, dict):
                        raise ConfigError(
                            f"config section '{here}.{sub}' must be a table")
                    for leaf in subval:
                        if leaf not in _COLLOC_KEYS:
                            raise ConfigError(
                                f"unknown config key '{here}.{sub}.{leaf}'")


def load_config_file(path) -> dict:
    """Parse a TOML config file and validate its keys."""
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
    _check_keys(cfg)
    return cfg


def _deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if (isinstance(val, dict) and isinstance(out.get(key), dict)):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def merge_config(file_cfg: dict | None, flags: dict | None = None) -> dict:
    """Layer defaults, per-example defaults, file config, and flags.

    The example id is settled first (flag > file > default) so the right
    per-example defaults are applied underneath the file values.  Returns
    the merged dict with stage seeds still unresolved; ``resolve_config``
    derives them.
    """
    file_cfg = file_cfg or {}
    _check_keys(file_cfg)
    flags = {k: v for k, v in (flags or {}).items() if v is not None}

    example = flags.get("example", file_cfg.get("example",
                                                _BASE_DEFAULTS["example"]))
    if example not in pm.EXAMPLE_IDS:
        raise ConfigError(
            f"unknown example '{example}'; choose one of {pm.EXAMPLE_IDS}")

    merged = _deep_merge(_BASE_DEFAULTS, EXAMPLE_DEFAULTS.get(example, {}))
    merged = _deep_merge(merged, file_cfg)
    merged["example"] = example

    # flag overrides, each mapped onto its config path
    if "seed" in flags:
        merged["seed"] = int(flags["seed"])
    if "out" in flags:
        merged["out"] = str(flags["out"])
    if "mp" in flags:
        merged["correction"]["m_p"] = int(flags["mp"])
    if "contrast" in flags:
        merged["problem"]["contrast"] = float(flags["contrast"])
    if "petals" in flags:
        merged["problem"]["petals"] = int(flags["petals"])
    if flags.get("no_correction"):
        merged["correction"]["enabled"] = False
    if "jobs" in flags:
        merged.setdefault("sweep", {})
        merged["sweep"]["jobs"] = int(flags["jobs"])
    return merged


def resolve_config(merged: dict) -> dict:
    """Fill derived defaults (stage seeds, output dir) into a merged dict.

    Seed derivation from the master seed: init nets use ``seed`` (plus
    the subdomain index per net), initialization collocation ``seed +
    1000``, correction nets ``seed + 2000``, correction collocation
    ``seed + 3000``.  Explicit section seeds are kept.
    """
    out = copy.deepcopy(merged)
    master = int(out["seed"])
    if out["init"].get("seed") is None:
        out["init"]["seed"] = master
    if out["collocation"].get("seed") is None:
        out["collocation"]["seed"] = master + 1000
    if out["correction"].get("seed") is None:
        out["correction"]["seed"] = master + 2000
    if out["correction"].get("collocation") is None:
        out["correction"]["collocation"] = {
            k: copy.deepcopy(v) for k, v in out["collocation"].items()}
        out["correction"]["collocation"]["seed"] = None
    ccol = out["correction"]["collocation"]
    for key in _COLLOC_KEYS:
        # counts and weights fall back to the init-stage table; the seed
        # never does, so the two stages keep independent samples
        if key not in ccol and key != "seed":
            ccol[key] = copy.deepcopy(out["collocation"].get(key))
    if ccol.get("seed") is None:
        ccol["seed"] = master + 3000
    for table in (out["collocation"], out["correction"]["collocation"]):
        if table.get("weights") is None:
            table["weights"] = _auto_weights(out)
    if out.get("out") is None:
        root = os.environ.get("QLIPS_OUT", "runs")
        out["out"] = os.path.join(root, out["example"])
    return out


def _auto_weights(merged: dict) -> list[float]:
    """Residual-group weights used when the config leaves them unset.

    ex4's interior-plus and flux-jump rows carry the contrast factor;
    scaling their weights by contrast**-2 cancels it, which keeps the
    relative SVD truncation from discarding the other side of the system.
    Every other example runs unweighted.
    """
    if merged["example"] == "ex4":
        c = float(merged["problem"].get("contrast", 1e8))
        return [c ** -2, 1.0, 1.0, c ** -2, 1.0]
    return [1.0] * 5


def _range_pair(val, where: str) -> tuple[float, float]:
    try:
        lo, hi = (float(val[0]), float(val[1]))
    except (TypeError, ValueError, IndexError) as exc:
        raise ConfigError(f"{where} must be a [low, high] pair") from exc
    if len(val) != 2 or not lo < hi:
        raise ConfigError(f"{where} must be a [low, high] pair with low < high")
    return lo, hi


def _colloc_spec(table: dict, where: str) -> tuple[geo.CollocationSpec, int]:
    weights = table.get("weights") or [1.0] * 5
    if len(weights) != 5:
        raise ConfigError(f"{where}.weights needs 5 entries "
                          "(interior+, interior-, value jump, flux jump, "
                          "boundary)")
    spec = geo.CollocationSpec(
        n_interior_plus=int(table["interior_plus"]),
        n_interior_minus=int(table["interior_minus"]),
        n_interface=int(table["interface"]),
        n_boundary=int(table["boundary"]),
        weights=tuple(float(w) for w in weights))
    return spec, int(table["seed"])


@dataclasses.dataclass(frozen=True)
class InitSpec:
    """Initialization-stage network hyperparameters."""
    m: int
    activation: str
    weight_range: tuple[float, float]
    bias_range: tuple[float, float]
    seed: int


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Typed view of a fully resolved run configuration."""
    example: str
    seed: int
    out: Path
    init: InitSpec
    base_colloc: geo.CollocationSpec
    base_colloc_seed: int
    correction_enabled: bool
    correction: perturbation.CorrectionSpec
    corr_colloc: geo.CollocationSpec
    corr_colloc_seed: int
    solver_options: solver.SolverOptions
    problem_params: dict
    grid_resolution: tuple | None
    trace_samples: int
    resolved: dict  # plain-dict echo, written into report.json


def config_from_resolved(resolved: dict) -> RunConfig:
    """Build the typed config, validating through the component types."""
    init = resolved["init"]
    init_spec = InitSpec(
        m=int(init["m"]), activation=str(init["activation"]),
        weight_range=_range_pair(init["weight_range"], "init.weight_range"),
        bias_range=_range_pair(init["bias_range"], "init.bias_range"),
        seed=int(init["seed"]))
    if init_spec.m <= 0:
        raise ConfigError("init.m must be positive")

    base_spec, base_seed = _colloc_spec(resolved["collocation"],
                                        "collocation")
    corr = resolved["correction"]
    corr_spec = perturbation.CorrectionSpec(
        m_p=int(corr["m_p"]), activation=str(corr["activation"]),
        weight_range=_range_pair(corr["weight_range"],
                                 "correction.weight_range"),
        bias_range=_range_pair(corr["bias_range"], "correction.bias_range"),
        seed=int(corr["seed"]),
        keep_second_order=bool(corr["keep_second_order"]),
        rounds=int(corr["rounds"]))
    ccol_spec, ccol_seed = _colloc_spec(corr["collocation"],
                                        "correction.collocation")

    sol = resolved["solver"]
    options = solver.SolverOptions(
        max_iters=int(sol["max_iters"]),
        svd_threshold=float(sol["svd_threshold"]),
        stop_tol=float(sol["stop_tol"]),
        damping=float(sol["damping"]),
        backtrack=bool(sol["backtrack"]))

    params = {k: (int(v) if k == "petals" else float(v))
              for k, v in resolved["problem"].items()}

    rep = resolved["report"]
    grid = rep.get("grid")
    if grid is not None:
        grid = tuple(int(g) for g in grid)
    trace_samples = int(rep["trace_samples"])
    if trace_samples < 2:
        raise ConfigError("report.trace_samples must be at least 2")

    return RunConfig(
        example=str(resolved["example"]), seed=int(resolved["seed"]),
        out=Path(resolved["out"]), init=init_spec,
        base_colloc=base_spec, base_colloc_seed=base_seed,
        correction_enabled=bool(corr["enabled"]), correction=corr_spec,
        corr_colloc=ccol_spec, corr_colloc_seed=ccol_seed,
        solver_options=options, problem_params=params,
        grid_resolution=grid, trace_samples=trace_samples,
        resolved=resolved)


# ---------------------------------------------------------------------------
# output writers

def _fmt_cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return FLOAT_FMT % float(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt_cell(c) for c in row])


def _history_rows(stage: str, report: solver.SolveReport):
    rows = []
    for k, norm in enumerate(report.residual_norms):
        rel = report.rel_changes[k - 1] if 1 <= k <= len(report.rel_changes) \
            else ""
        rank = report.ranks[k - 1] if 1 <= k <= len(report.ranks) else ""
        rows.append((stage, k, float(norm), rel, rank))
    return rows


def _error_rows(stage: str, err: metrics.ErrorReport):
    rows = [(stage, "all", err.relative_l2, err.relative_linf)]
    for s, (l2, linf) in enumerate(zip(err.l2_by_sub, err.linf_by_sub)):
        rows.append((stage, s, l2, linf))
    return rows


def _heatmap_rows(grid: metrics.TestGrid, evaluate, exacts):
    cols = grid.points.shape[1]
    u = np.empty(grid.n_points)
    ug = np.empty(grid.n_points)
    for s in np.unique(grid.sub):
        sel = grid.sub == int(s)
        u[sel] = np.asarray(evaluate(grid.points[sel], int(s)), dtype=float)
        ug[sel] = np.asarray(exacts[int(s)].u(grid.points[sel]), dtype=float)
    header = ["x", "y", "t"][:cols] + ["subdomain", "u", "exact", "abs_error"]
    rows = [tuple(grid.points[i]) + (int(grid.sub[i]), u[i], ug[i],
                                     abs(u[i] - ug[i]))
            for i in range(grid.n_points)]
    return header, rows


def _trace_rows(trace: dict):
    cols = ["param", "x", "y"]
    if "t" in trace:
        cols.append("t")
    cols += ["base_error", "correction"]
    data = list(zip(*(trace[c] for c in cols)))
    return cols, data


def _diag_jsonable(diag: dict) -> dict:
    out = {}
    for group, vals in diag.items():
        out[group] = {k: (int(v) if k == "n_rows" else float(v))
                      for k, v in vals.items()
                      if not (isinstance(v, float) and math.isnan(v))}
    return out


def _report_jsonable(report: solver.SolveReport) -> dict:
    return {
        "status": report.status,
        "iterations": int(report.iterations),
        "residual_norm": float(report.final_residual_norm),
        "initial_residual_norm": float(report.residual_norms[0]),
        "ranks": [int(r) for r in report.ranks],
        "wall_time": float(report.wall_time),
    }


def _error_jsonable(err: metrics.ErrorReport) -> dict:
    return {
        "relative_l2": float(err.relative_l2),
        "relative_linf": float(err.relative_linf),
        "l2_by_sub": [float(v) for v in err.l2_by_sub],
        "linf_by_sub": [float(v) for v in err.linf_by_sub],
        "n_points": int(err.n_points),
    }


# ---------------------------------------------------------------------------
# run

@dataclasses.dataclass
class RunResult:
    """Artifacts and exit status of one run."""
    report: dict
    out_dir: Path
    files: dict
    exit_code: int


def _write_report(out_dir: Path, report: dict) -> Path:
    path = out_dir / "report.json"
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    return path


def run(config: RunConfig) -> RunResult:
    """Execute one configured run and write all artifacts.

    Numerical failures and divergence do not raise: they are recorded in
    ``report.json`` and returned through ``exit_code`` so sweeps can keep
    going.  Config errors raise ``ConfigError``.
    """
    t_start = time.perf_counter()
    out_dir = config.out
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {}

    problem = pm.builtin_example(config.example, **config.problem_params)
    geom = problem.geometry
    dim = 3 if geom.has_time else 2
    n_subs = problem.n_subdomains

    report: dict = {
        "schema_version": SCHEMA_VERSION,
        "example": config.example,
        "status": "ok",
        "config": config.resolved,
    }

    def fail(stage: str, kind: str, message: str, code: int) -> RunResult:
        report["status"] = "error"
        report["error"] = {"stage": stage, "type": kind, "message": message}
        report["wall_time_total"] = time.perf_counter() - t_start
        files["report.json"] = _write_report(out_dir, report)
        return RunResult(report, out_dir, files, code)

    # stage 1: initialization solve
    nets0 = tuple(
        basis.init_net(m=config.init.m, dim=dim,
                       activation=config.init.activation,
                       weight_range=config.init.weight_range,
                       bias_range=config.init.bias_range,
                       seed=config.init.seed + s)
        for s in range(n_subs))
    try:
        colloc = geo.sample_collocation(geom, config.base_colloc,
                                        seed=config.base_colloc_seed)
        blocks = assembly.build_blocks(problem, nets0, colloc)

        def build(alpha):
            return (assembly.assemble_residual(problem, nets0, colloc,
                                               blocks, alpha),
                    assembly.assemble_jacobian(problem, nets0, colloc,
                                               blocks, alpha))

        init_report = solver.gauss_newton(build, np.zeros(blocks.n_cols),
                                          config.solver_options)
    except NumericalError as exc:
        return fail("init", type(exc).__name__, str(exc), EXIT_NUMERICAL)

    report["init"] = _report_jsonable(init_report)
    if init_report.status == "diverged":
        return fail("init", "Divergence",
                    "initialization solve diverged "
                    f"(residual {init_report.final_residual_norm:.3e})",
                    EXIT_DIVERGED)

    base_nets = assembly.with_alpha(nets0, init_report.alpha)

    # stage 2: perturbation correction (optional)
    corr_colloc = geo.sample_collocation(geom, config.corr_colloc,
                                         seed=config.corr_colloc_seed)
    try:
        before_sys = assembly.assemble_system(problem, base_nets, corr_colloc,
                                              with_jacobian=False)
        diagnostics = {"before": _diag_jsonable(
            metrics.residual_diagnostics(before_sys))}

        if config.correction_enabled:
            sol, corr_report = perturbation.correct(
                problem, base_nets, corr_colloc, config.correction,
                config.solver_options)
        else:
            sol = perturbation.CorrectedSolution(
                base_nets=base_nets,
                correction_nets=perturbation.correction_nets_for(
                    problem, config.correction),
                epsilon=0.0)
            corr_report = None
    except NumericalError as exc:
        return fail("correction", type(exc).__name__, str(exc),
                    EXIT_NUMERICAL)

    if corr_report is not None:
        report["correction"] = _report_jsonable(corr_report)
        report["correction"]["enabled"] = True
        report["correction"]["epsilon"] = float(sol.epsilon)
        if corr_report.status == "diverged":
            return fail("correction", "Divergence",
                        "correction solve diverged "
                        f"(residual {corr_report.final_residual_norm:.3e})",
                        EXIT_DIVERGED)
        composite_nets = tuple(sol.side_net(s) for s in range(n_subs))
        after_sys = assembly.assemble_system(problem, composite_nets,
                                             corr_colloc,
                                             with_jacobian=False)
        diagnostics["after"] = _diag_jsonable(
            metrics.residual_diagnostics(after_sys))
    else:
        report["correction"] = {"enabled": False}
    report["residual_diagnostics"] = diagnostics

    # metrics on the uniform test grid
    try:
        grid = metrics.uniform_grid(geom, config.grid_resolution)
        init_err = metrics.relative_errors(sol.evaluate_base, problem.exacts,
                                           grid)
        report["init"]["errors"] = _error_jsonable(init_err)
        if corr_report is not None:
            corr_err = metrics.relative_errors(sol.evaluate, problem.exacts,
                                               grid)
            report["correction"]["errors"] = _error_jsonable(corr_err)
        trace = metrics.interface_trace(sol, problem.exacts, geom,
                                        n_samples=config.trace_samples)
    except NumericalError as exc:
        return fail("metrics", type(exc).__name__, str(exc), EXIT_NUMERICAL)

    # artifacts
    hist_rows = _history_rows("init", init_report)
    if corr_report is not None:
        hist_rows += _history_rows("correction", corr_report)
    _write_csv(out_dir / "residual_history.csv",
               ("stage", "iteration", "residual_norm", "rel_change", "rank"),
               hist_rows)
    files["residual_history.csv"] = out_dir / "residual_history.csv"

    err_rows = _error_rows("init", init_err)
    if corr_report is not None:
        err_rows += _error_rows("corrected", corr_err)
    _write_csv(out_dir / "errors_table.csv",
               ("stage", "subdomain", "relative_l2", "relative_linf"),
               err_rows)
    files["errors_table.csv"] = out_dir / "errors_table.csv"

    header, rows = _heatmap_rows(grid, sol.evaluate_base, problem.exacts)
    _write_csv(out_dir / "heatmap_init.csv", header, rows)
    files["heatmap_init.csv"] = out_dir / "heatmap_init.csv"

    if corr_report is not None:
        header, rows = _heatmap_rows(grid, sol.evaluate, problem.exacts)
    else:
        rows = []  # header-only: stage disabled
    _write_csv(out_dir / "heatmap_corrected.csv", header, rows)
    files["heatmap_corrected.csv"] = out_dir / "heatmap_corrected.csv"

    cols, rows = _trace_rows(trace)
    _write_csv(out_dir / "interface_trace.csv", cols, rows)
    files["interface_trace.csv"] = out_dir / "interface_trace.csv"

    def _n_rows(spec: geo.CollocationSpec) -> int:
        return (spec.n_interior_plus + spec.n_interior_minus
                + 2 * spec.n_interface + spec.n_boundary)

    report["n_collocation"] = {
        "init": _n_rows(config.base_colloc),
        "correction": _n_rows(config.corr_colloc),
    }
    report["wall_time_total"] = time.perf_counter() - t_start
    files["report.json"] = _write_report(out_dir, report)
    return RunResult(report, out_dir, files, EXIT_OK)


def run_resolved(resolved: dict) -> RunResult:
    """Convenience wrapper: typed-config construction plus ``run``."""
    return run(config_from_resolved(resolved))


# ---------------------------------------------------------------------------
# sweeps

def _fmt_value(value) -> str:
    if isinstance(value, float):
        return "%g" % value
    return str(value)


def _apply_axis(merged: dict, axis: str, value) -> dict:
    out = copy.deepcopy(merged)
    if axis == "mp":
        out["correction"]["m_p"] = int(value)
    elif axis == "contrast":
        out.setdefault("problem", {})["contrast"] = float(value)
    elif axis == "petals":
        out.setdefault("problem", {})["petals"] = int(value)
    elif axis == "seed":
        out["seed"] = int(value)
    else:
        raise ConfigError(f"unknown sweep axis '{axis}'; "
                          f"choose one of {SWEEP_AXES}")
    return out


def _check_axis(axis: str, example: str) -> None:
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis '{axis}'; "
                          f"choose one of {SWEEP_AXES}")
    if axis == "petals" and example != "ex3":
        raise ConfigError("sweep axis 'petals' only applies to ex3")
    if axis == "contrast" and example != "ex4":
        raise ConfigError("sweep axis 'contrast' only applies to ex4")


def _sweep_worker(job: tuple) -> dict:
    """Run one sweep row; never raises, failures land in the row dict."""
    merged, axis, value, out_dir = job
    row: dict = {"axis": axis, "value": value}
    try:
        resolved = resolve_config(_apply_axis(merged, axis, value))
        resolved["out"] = out_dir
        resolved.pop("sweep", None)
        result = run_resolved(resolved)
        rep = result.report
        row["status"] = ("ok" if result.exit_code == EXIT_OK else
                         "error:" + rep.get("error", {}).get("type",
                                                             "unknown"))
        row["exit_code"] = result.exit_code
        init_err = rep.get("init", {}).get("errors")
        if init_err:
            row["init_l2"] = init_err["relative_l2"]
            row["init_linf"] = init_err["relative_linf"]
        corr = rep.get("correction", {})
        if corr.get("errors"):
            row["corrected_l2"] = corr["errors"]["relative_l2"]
            row["corrected_linf"] = corr["errors"]["relative_linf"]
            row["iterations"] = corr["iterations"]
            row["residual_norm"] = corr["residual_norm"]
        elif "init" in rep:
            row["iterations"] = rep["init"].get("iterations")
            row["residual_norm"] = rep["init"].get("residual_norm")
        if result.exit_code != EXIT_OK:
            row["message"] = rep.get("error", {}).get("message", "")
    except Exception as exc:  # per-row capture keeps the sweep going
        row["status"] = "error:" + type(exc).__name__
        row["exit_code"] = (EXIT_CONFIG if isinstance(exc, ConfigError)
                            else EXIT_NUMERICAL)
        row["message"] = str(exc)
    return row


@dataclasses.dataclass
class SweepResult:
    """Row summaries and the aggregated table path."""
    rows: list
    table_path: Path
    exit_code: int


_SWEEP_COLUMNS = ("value", "status", "init_l2", "init_linf", "corrected_l2",
                  "corrected_linf", "iterations", "residual_norm")


def sweep(merged: dict, axis: str | None = None, values=None,
          jobs: int | None = None) -> SweepResult:
    """Run once per axis value and aggregate one table row per run.

    Axis, values, and job count default to the ``[sweep]`` section of the
    merged config.  Each run owns ``<out>/<axis>=<value>/`` exclusively;
    failures are recorded in their row and the sweep continues.
    """
    sweep_cfg = merged.get("sweep", {})
    axis = axis if axis is not None else sweep_cfg.get("axis")
    values = values if values is not None else sweep_cfg.get("values")
    jobs = int(jobs if jobs is not None else sweep_cfg.get("jobs", 1))
    if axis is None or not values:
        raise ConfigError("sweep needs an axis and a non-empty values list")
    if jobs < 1:
        raise ConfigError("sweep.jobs must be at least 1")
    _check_axis(str(axis), merged.get("example", _BASE_DEFAULTS["example"]))

    root = Path(resolve_config(merged)["out"])
    root.mkdir(parents=True, exist_ok=True)
    jobs_list = [
        (merged, str(axis), value,
         str(root / f"{axis}={_fmt_value(value)}"))
        for value in values]

    if jobs == 1:
        rows = [_sweep_worker(job) for job in jobs_list]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_sweep_worker, jobs_list))

    table_rows = []
    for row in rows:
        table_rows.append(tuple(
            row.get(col, "") if row.get(col) is not None else ""
            for col in _SWEEP_COLUMNS))
    table_path = root / "sweep_table.csv"
    _write_csv(table_path, _SWEEP_COLUMNS, table_rows)

    exit_code = EXIT_OK
    for row in rows:
        if row.get("exit_code", EXIT_OK) != EXIT_OK:
            exit_code = row["exit_code"]
            break
    return SweepResult(rows=rows, table_path=table_path, exit_code=exit_code)


# ---------------------------------------------------------------------------
# entry point

def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="qlips",
        description="Mesh-free two-step solver for quasi-linear interface "
                    "problems: randomized-network initialization plus a "
                    "perturbation-correction solve.")
    ap.add_argument("--example", choices=pm.EXAMPLE_IDS,
                    help="builtin example id (default ex1)")
    ap.add_argument("--config", help="TOML config file")
    ap.add_argument("--mp", type=int, help="correction basis size m_p")
    ap.add_argument("--contrast", type=float,
                    help="diffusion contrast (ex4)")
    ap.add_argument("--petals", type=int, help="petal count (ex3)")
    ap.add_argument("--seed", type=int, help="master seed")
    ap.add_argument("--no-correction", action="store_true",
                    help="stop after the initialization solve")
    ap.add_argument("--jobs", type=int,
                    help="concurrent runs for sweeps (default 1)")
    ap.add_argument("--out", help="output directory "
                                  "(default $QLIPS_OUT/<example> or "
                                  "runs/<example>)")
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    flags = {
        "example": args.example, "mp": args.mp, "contrast": args.contrast,
        "petals": args.petals, "seed": args.seed,
        "no_correction": args.no_correction or None,
        "jobs": args.jobs, "out": args.out,
    }
    try:
        file_cfg = load_config_file(args.config) if args.config else {}
        merged = merge_config(file_cfg, flags)
        if "sweep" in merged and merged["sweep"].get("values"):
            result = sweep(merged)
            print(f"sweep table written to {result.table_path}")
            for row in result.rows:
                print(f"  {row['axis']}={_fmt_value(row['value'])}: "
                      f"{row['status']}")
            return result.exit_code
        resolved = resolve_config(merged)
        run_result = run_resolved(resolved)
        rep = run_result.report
        if run_result.exit_code == EXIT_OK:
            line = f"{rep['example']}: init L2 " \
                   f"{rep['init']['errors']['relative_l2']:.3e}"
            corr = rep.get("correction", {})
            if corr.get("errors"):
                line += f", corrected L2 {corr['errors']['relative_l2']:.3e}"
            print(line)
            print(f"artifacts in {run_result.out_dir}")
        else:
            err = rep.get("error", {})
            print(f"{rep['example']}: {err.get('type')} in "
                  f"{err.get('stage')} stage: {err.get('message')}",
                  file=sys.stderr)
        return run_result.exit_code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
