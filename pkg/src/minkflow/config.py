"""Run configuration: YAML loading, validation, and object construction.

Configs are nested key-value sections (YAML).  Validation collects every
problem before failing, rejects unknown keys (with a suggestion when a close
or aliased key exists), and checks parameter ranges before any computation.
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass, field as _field

import numpy as np
import yaml

from .errors import ConfigError
from .geometry import (
    SupportField,
    constant_field,
    ellipsoid_field,
    perturbed_sphere_field,
)
from .grids import SphereGrid, build_grid
from .measures import SphereMeasure, measure_from_atoms, measure_from_density
from .weights import make_potential, power_law_weight, table_weight

MODES = ("flow", "solve-orlicz-general", "solve-christoffel", "orlicz-norm", "geometry-check")

DEFAULTS = {
    "grid_resolution_1d": 512,
    "grid_resolution_2d": (64, 128),
    "dt_max": 1e-2,
    "residual_tol": 1e-6,
    "t_max": 100.0,
    "max_steps": 2_000_000,
    "trace_stride": 1,
    "stall_window": 500,
    "epsilon_schedule": (0.1, 0.05, 0.025),
    "bandwidths": (0.3, 0.15),
    "floor_fraction": 0.05,
}

# Recognized keys per section; a None schema means free-form scalars.
_SCHEMA = {
    "mode": None,
    "seed": None,
    "grid": {"dim": None, "resolution": None},
    "body": {"kind": None, "radius": None, "semi_axes": None, "amplitude": None,
             "modes": None, "even": None, "csv": None, "seed": None},
    "data": {
        "f": {"constant": None, "expression": None, "csv": None},
        "measure": {"atoms_csv": None, "density_csv": None, "even": None},
    },
    "weight": {"kind": None, "p": None, "case": None, "csv": None,
               "c1": None, "c2": None, "q": None, "epsilon_schedule": None},
    "flow": {"kind": None, "k": None, "epsilon": None},
    "solver": {"dt_max": None, "residual_tol": None, "t_max": None, "max_steps": None,
               "epsilon_schedule": None, "bandwidths": None, "floor_fraction": None,
               "trace_stride": None, "stall_window": None},
    "output": {"directory": None, "mesh": None},
    "norm": {"g": {"constant": None, "expression": None, "csv": None}, "p": None},
}

_ALIASES = {
    "phi_exponent": "p", "exponent": "p", "power": "p",
    "eps": "epsilon", "epsilon-schedule": "epsilon_schedule",
    "tol": "residual_tol", "tolerance": "residual_tol",
    "dt": "dt_max", "bandwidth": "bandwidths",
}


def _suggest(key: str, known) -> str:
    if key in _ALIASES and _ALIASES[key] in known:
        return f"; did you mean {_ALIASES[key]}"
    close = difflib.get_close_matches(key, known, n=1, cutoff=0.5)
    if close:
        return f"; did you mean {close[0]}"
    return ""


def _walk(section, schema, path, problems):
    if not isinstance(section, dict):
        problems.append(f"{path or 'config'}: expected a mapping, got {type(section).__name__}")
        return
    for key, value in section.items():
        if key not in schema:
            problems.append(f"unknown key {path}{key}{_suggest(str(key), list(schema))}")
            continue
        sub = schema[key]
        if isinstance(sub, dict) and isinstance(value, dict):
            _walk(value, sub, f"{path}{key}.", problems)


@dataclass(eq=False)
class RunConfig:
    """Fully-resolved run configuration; ``raw`` reproduces the run."""

    mode: str
    raw: dict
    seed: int = 0
    grid_dim: int = 1
    resolution: tuple = (512,)
    body: dict = _field(default_factory=dict)
    data: dict = _field(default_factory=dict)
    weight: dict = _field(default_factory=dict)
    flow: dict = _field(default_factory=dict)
    solver: dict = _field(default_factory=dict)
    output: dict = _field(default_factory=dict)
    norm: dict = _field(default_factory=dict)


def load_config(path) -> RunConfig:
    """Parse and validate a YAML run config; raises :class:`ConfigError`
    enumerating every problem (parse errors carry line/column)."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"YAML parse error{where}: {exc.problem}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    if raw is None:
        raw = {}
    return validate_config(raw)


def validate_config(raw: dict) -> RunConfig:
    problems: list[str] = []
    _walk(raw, _SCHEMA, "", problems)

    mode = raw.get("mode")
    if mode not in MODES:
        problems.append(f"mode must be one of {MODES}, got {mode!r}")

    grid_sec = raw.get("grid", {}) or {}
    dim = grid_sec.get("dim", 1)
    if dim not in (1, 2):
        problems.append(f"grid.dim must be 1 or 2, got {dim}")
        dim = 1
    resolution = grid_sec.get("resolution")
    if resolution is None:
        resolution = DEFAULTS["grid_resolution_1d"] if dim == 1 else DEFAULTS["grid_resolution_2d"]
    if dim == 1:
        if not isinstance(resolution, int) or resolution < 5:
            problems.append(f"grid.resolution must be an integer >= 5 for dim 1, got {resolution}")
    else:
        ok = isinstance(resolution, (list, tuple)) and len(resolution) == 2
        if ok:
            n_lat, n_lon = resolution
            ok = isinstance(n_lat, int) and isinstance(n_lon, int) and n_lat >= 8 and n_lon >= 8 and n_lon % 2 == 0
        if not ok:
            problems.append(f"grid.resolution must be [n_lat >= 8, even n_lon >= 8] for dim 2, got {resolution}")

    body = dict(raw.get("body", {}) or {})
    body.setdefault("kind", "sphere")
    if body["kind"] not in ("sphere", "ellipsoid", "table", "perturbed-sphere"):
        problems.append(f"body.kind must be sphere|ellipsoid|table|perturbed-sphere, got {body['kind']!r}")
    if body["kind"] == "table" and not body.get("csv"):
        problems.append("body.kind=table needs body.csv")

    weight = dict(raw.get("weight", {}) or {})
    weight.setdefault("kind", "power")
    if weight["kind"] not in ("power", "custom-table"):
        problems.append(f"weight.kind must be power|custom-table, got {weight['kind']!r}")
    if weight["kind"] == "power" and mode not in ("orlicz-norm", "geometry-check") and "p" not in weight:
        problems.append("weight.p is required for power-law weights")
    if weight["kind"] == "custom-table" and not weight.get("csv"):
        problems.append("weight.kind=custom-table needs weight.csv")
    case = weight.get("case")
    if case is not None and case not in ("3a", "3b", "3c", "3d"):
        problems.append(f"weight.case must be 3a|3b|3c|3d, got {case!r}")

    flow = dict(raw.get("flow", {}) or {})
    if mode == "flow":
        flow.setdefault("kind", "unnormalized")
        if flow["kind"] not in ("normalized", "unnormalized", "regularized"):
            problems.append(
                f"flow.kind must be normalized|unnormalized|regularized for mode=flow "
                f"(use mode=solve-christoffel for the Christoffel flow), got {flow['kind']!r}"
            )
        if flow["kind"] == "regularized" and "epsilon" not in flow:
            problems.append("flow.kind=regularized needs flow.epsilon")
    if mode == "solve-christoffel":
        k = flow.get("k", 1)
        p = weight.get("p")
        if not isinstance(k, int) or k < 1:
            problems.append(f"flow.k must be a positive integer, got {k}")
        elif isinstance(k, int) and dim in (1, 2) and k > dim:
            problems.append(f"flow.k must satisfy k <= n = {dim}, got {k}")
        if p is not None and isinstance(k, int) and not p > k + 1:
            problems.append(f"weight.p = {p} rejected: the Christoffel flow requires p > k+1 = {k + 1}")
        flow["k"] = k

    solver = dict(raw.get("solver", {}) or {})
    for key, lo in (("dt_max", 0.0), ("residual_tol", 0.0), ("t_max", 0.0), ("floor_fraction", 0.0)):
        if key in solver and not (isinstance(solver[key], (int, float)) and solver[key] >= lo):
            problems.append(f"solver.{key} must be a number >= {lo}, got {solver[key]!r}")
    solver.setdefault("dt_max", DEFAULTS["dt_max"])
    solver.setdefault("residual_tol", DEFAULTS["residual_tol"])
    solver.setdefault("t_max", DEFAULTS["t_max"])
    solver.setdefault("max_steps", DEFAULTS["max_steps"])
    solver.setdefault("trace_stride", DEFAULTS["trace_stride"])
    solver.setdefault("stall_window", DEFAULTS["stall_window"])
    solver.setdefault("floor_fraction", DEFAULTS["floor_fraction"])
    if "epsilon_schedule" in solver and "epsilon_schedule" in weight:
        problems.append("epsilon_schedule given in both weight and solver sections; pick one")
    schedule = solver.get("epsilon_schedule", weight.get("epsilon_schedule", list(DEFAULTS["epsilon_schedule"])))
    if not (isinstance(schedule, (list, tuple)) and all(isinstance(e, (int, float)) and 0 < e <= 0.25 for e in schedule)):
        problems.append(f"epsilon_schedule must be a list of values in (0, 0.25], got {schedule!r}")
    solver["epsilon_schedule"] = list(schedule)
    solver.setdefault("bandwidths", list(DEFAULTS["bandwidths"]))

    output = dict(raw.get("output", {}) or {})
    output.setdefault("directory", "out")
    output.setdefault("mesh", False)

    norm = dict(raw.get("norm", {}) or {})
    if mode == "orlicz-norm":
        if "g" not in norm:
            problems.append("orlicz-norm mode needs norm.g")
        if "p" not in norm:
            problems.append("orlicz-norm mode needs norm.p (potential t**p)")
        elif not (isinstance(norm["p"], (int, float)) and norm["p"] > 0):
            problems.append(f"norm.p must be positive, got {norm['p']!r}")

    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        problems.append(f"seed must be an integer, got {seed!r}")
        seed = 0

    if problems:
        raise ConfigError(problems)
    resolved = dict(raw)
    resolved.update({"mode": mode, "seed": seed, "body": body, "weight": weight,
                     "flow": flow, "solver": solver, "output": output, "norm": norm,
                     "grid": {"dim": dim, "resolution": resolution if dim == 1 else list(resolution)}})
    return RunConfig(
        mode=mode, raw=resolved, seed=seed, grid_dim=dim,
        resolution=(resolution,) if dim == 1 else tuple(resolution),
        body=body, data=dict(raw.get("data", {}) or {}), weight=weight,
        flow=flow, solver=solver, output=output, norm=norm,
    )


# ---------------------------------------------------------------------------
# Object construction from a validated config
# ---------------------------------------------------------------------------

_EXPR_NAMES = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log,
    "sqrt": np.sqrt, "abs": np.abs, "maximum": np.maximum, "minimum": np.minimum,
    "pi": np.pi,
}


def eval_node_expression(grid: SphereGrid, expr: str) -> np.ndarray:
    """Evaluate a scalar expression over grid nodes.

    Names: x, y (and z for S^2) node coordinates, theta/phi angles, and basic
    numpy functions.  Configs are trusted input; this is a convenience, not a
    sandbox.
    """
    ns = dict(_EXPR_NAMES)
    ns["x"] = grid.nodes[:, 0]
    ns["y"] = grid.nodes[:, 1]
    if grid.dim == 2:
        ns["z"] = grid.nodes[:, 2]
        n_lon = grid.resolution[1]
        ns["theta"] = np.repeat(grid.thetas, n_lon)
        ns["phi"] = np.tile(grid.phis, grid.resolution[0])
    else:
        ns["theta"] = grid.thetas
    try:
        vals = eval(expr, {"__builtins__": {}}, ns)  # noqa: S307 - trusted config
    except Exception as exc:
        raise ConfigError(f"cannot evaluate expression {expr!r}: {exc}") from exc
    return np.broadcast_to(np.asarray(vals, dtype=float), (grid.n_nodes,)).copy()


def _read_csv_column(path, column="h"):
    rows = np.genfromtxt(path, delimiter=",", names=True)
    if rows.dtype.names and column in rows.dtype.names:
        return np.asarray(rows[column], dtype=float)
    data = np.genfromtxt(path, delimiter=",")
    data = np.atleast_2d(data)
    return np.asarray(data[:, -1], dtype=float)


def build_grid_from(cfg: RunConfig) -> SphereGrid:
    return build_grid(cfg.grid_dim, cfg.resolution[0] if cfg.grid_dim == 1 else cfg.resolution)


def build_body(cfg: RunConfig, grid: SphereGrid, seed: int | None = None) -> SupportField:
    body = cfg.body
    kind = body["kind"]
    if kind == "sphere":
        return constant_field(grid, float(body.get("radius", 1.0)))
    if kind == "ellipsoid":
        return ellipsoid_field(grid, body.get("semi_axes", [1.0] * (grid.dim + 1)))
    if kind == "perturbed-sphere":
        return perturbed_sphere_field(
            grid,
            radius=float(body.get("radius", 1.0)),
            amplitude=float(body.get("amplitude", 1e-3)),
            seed=int(body.get("seed", cfg.seed if seed is None else seed)),
            modes=tuple(body.get("modes", (2, 4))),
            even=bool(body.get("even", True)),
        )
    return SupportField(grid, _read_csv_column(body["csv"]))


def build_f(cfg: RunConfig, grid: SphereGrid) -> SupportField:
    f_sec = (cfg.data.get("f") or {}) if cfg.data else {}
    if "constant" in f_sec:
        return constant_field(grid, float(f_sec["constant"]))
    if "expression" in f_sec:
        return SupportField(grid, eval_node_expression(grid, f_sec["expression"]))
    if "csv" in f_sec:
        return SupportField(grid, _read_csv_column(f_sec["csv"], column="f"))
    return constant_field(grid, 1.0)


def build_measure(cfg: RunConfig, grid: SphereGrid) -> SphereMeasure:
    m_sec = (cfg.data.get("measure") or {}) if cfg.data else {}
    even = bool(m_sec.get("even", False))
    if "atoms_csv" in m_sec:
        data = np.atleast_2d(np.genfromtxt(m_sec["atoms_csv"], delimiter=","))
        if data.shape[1] != grid.dim + 2:
            raise ConfigError(
                f"atoms CSV needs {grid.dim + 1} direction components plus a mass column"
            )
        return measure_from_atoms(grid, data[:, : grid.dim + 1], data[:, -1], even=even)
    if "density_csv" in m_sec:
        dens = _read_csv_column(m_sec["density_csv"], column="density")
        if dens.shape[0] != grid.n_nodes:
            raise ConfigError(f"density CSV has {dens.shape[0]} rows; grid has {grid.n_nodes} nodes")
        return measure_from_density(grid, dens, even=even)
    return measure_from_density(grid, np.ones(grid.n_nodes), even=True)


def build_weight(cfg: RunConfig):
    w = cfg.weight
    if w["kind"] == "power":
        return power_law_weight(float(w["p"]))
    data = np.atleast_2d(np.genfromtxt(w["csv"], delimiter=","))
    if np.isnan(data[0]).any():   # header row
        data = data[1:]
    return table_weight(data[:, 0], data[:, 1])


def build_potential(cfg: RunConfig, weight, grid: SphereGrid):
    w = cfg.weight
    case = w.get("case")
    if case is None:
        # infer the natural case for power laws; custom weights need a declared case
        if weight.kind == "power":
            p = weight.p
            case = "3a" if p > 0 else ("3b" if p == 0 else "3d" if p > -1 else "3c")
        else:
            case = "3a"
    return make_potential(
        weight, case,
        c1=w.get("c1"), c2=w.get("c2"), q=w.get("q"), dim=grid.dim,
    )
