"""Command-line frontend: config-driven runs with trace/mesh/summary artifacts.

Subcommands map to run modes:

    flow         -> mode: flow                  (normalized/unnormalized/regularized)
    orlicz       -> mode: solve-orlicz-general  (measure data, epsilon schedule)
    christoffel  -> mode: solve-christoffel
    norm         -> mode: orlicz-norm           (prints the norm value)
    check        -> mode: geometry-check

Every run writes ``trace.csv`` (exact column set), ``final_body.csv``,
``summary.json`` (embedding the fully-resolved config, so a run can be
reproduced from its summary), and optionally a boundary mesh.  Exit codes:
0 converged/ok, 2 timeout or stall (partial result), 3 collapse,
4 invariant violation.  Identical config + seed gives byte-identical traces.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __name__ as _pkg  # noqa: F401
from .config import (
    DEFAULTS,
    RunConfig,
    build_body,
    build_f,
    build_grid_from,
    build_measure,
    build_potential,
    build_weight,
    eval_node_expression,
    load_config,
)
from .errors import ConfigError, MinkflowError, SpecError
from .flows import (
    FlowSpec,
    FlowStatus,
    default_christoffel_radius,
    run,
    solve_general_orlicz,
)
from .geometry import (
    SupportField,
    barycenter_of_surface_measure,
    constant_field,
    export_mesh,
    hausdorff_distance,
    min_radii_eigenvalue,
    volume,
    widths,
)
from .measures import hemisphere_check
from .weights import make_regularized, orlicz_norm

_MODE_BY_COMMAND = {
    "flow": "flow",
    "orlicz": "solve-orlicz-general",
    "christoffel": "solve-christoffel",
    "norm": "orlicz-norm",
    "check": "geometry-check",
}

_EPILOG = (
    "defaults: grid 512 (dim 1) or 64x128 (dim 2); dt_max 1e-2; residual_tol 1e-6; "
    "t_max 100; epsilon schedule 0.1/0.05/0.025; mollification bandwidths 0.3/0.15; "
    "seed 0.  The summary embeds the fully-resolved config."
)


def _write_final_body(path, h: SupportField) -> None:
    grid = h.grid
    cols = ["index", "ux", "uy"] + (["uz"] if grid.dim == 2 else []) + ["h"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for i, (u, v) in enumerate(zip(grid.nodes, h.values)):
            coords = ",".join(repr(float(c)) for c in u)
            fh.write(f"{i},{coords},{float(v)!r}\n")


def _summary_payload(cfg: RunConfig, outcome: str, extras: dict) -> dict:
    return {"outcome": outcome, "config": cfg.raw, **extras}


def _emit(out_dir: Path, cfg: RunConfig, outcome: str, extras: dict,
          trace=None, body=None, quiet=False) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    if trace is not None:
        trace.to_csv(out_dir / "trace.csv")
    if body is not None:
        _write_final_body(out_dir / "final_body.csv", body)
        if cfg.output.get("mesh"):
            suffix = "csv" if body.grid.dim == 1 else "off"
            export_mesh(body, out_dir / f"mesh.{suffix}")
    payload = _summary_payload(cfg, outcome, extras)
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    if not quiet:
        print(f"outcome: {outcome}")
        for key in ("final_residual", "gamma", "E_start", "E_end", "V_start", "V_end", "wall_time"):
            if key in extras:
                print(f"{key}: {extras[key]}")
        print(f"artifacts: {out_dir}")


def _flow_extras(result) -> dict:
    arr = result.trace.as_array()
    cols = result.trace.columns
    get = lambda name, row: float(arr[row, cols.index(name)])
    return {
        "status": result.status.value,
        "final_residual": get("residual", -1),
        "gamma": result.gamma,
        "E_start": get("E", 0), "E_end": get("E", -1),
        "V_start": get("V", 0), "V_end": get("V", -1),
        "widths": [get("wminus", -1), get("wplus", -1)],
        "invariant_checks": {k: v for k, v in result.counters.items()},
        "warnings": result.warnings,
    }


def run_mode(cfg: RunConfig, out_dir, seed: int | None = None, quiet: bool = False) -> int:
    """Execute the configured pipeline and write artifacts; returns the exit code."""
    t0 = time.perf_counter()
    if seed is not None:
        cfg.seed = seed
        cfg.raw["seed"] = seed
    out_dir = Path(out_dir if out_dir is not None else cfg.output.get("directory", "out"))
    grid = build_grid_from(cfg)

    if cfg.mode == "geometry-check":
        h = build_body(cfg, grid)
        mineig = min_radii_eigenvalue(h)
        convex = mineig > 1e-8 * float(np.max(h.values))
        w_minus, w_plus = widths(h)
        extras = {
            "weight_sum_error": abs(float(grid.weights.sum()) - (2 if grid.dim == 1 else 4) * np.pi),
            "min_radii_eigenvalue": mineig,
            "strictly_convex": bool(convex),
            "widths": [w_minus, w_plus],
            "volume": volume(h, check_convex=False),
            "barycenter_norm": float(np.linalg.norm(barycenter_of_surface_measure(h))),
            "wall_time": time.perf_counter() - t0,
        }
        _emit(out_dir, cfg, "ok" if convex else "convexity violation", extras, body=h, quiet=quiet)
        return 0 if convex else 4

    if cfg.mode == "orlicz-norm":
        mu = build_measure(cfg, grid)
        g_sec = cfg.norm["g"]
        if "constant" in g_sec:
            g = np.full(grid.n_nodes, float(g_sec["constant"]))
        elif "expression" in g_sec:
            g = eval_node_expression(grid, g_sec["expression"])
        else:
            from .config import _read_csv_column

            g = _read_csv_column(g_sec["csv"], column="g")
        p = float(cfg.norm["p"])
        value = orlicz_norm(g, lambda t: np.asarray(t, dtype=float) ** p, mu)
        print(value)
        extras = {"norm": value, "p": p, "wall_time": time.perf_counter() - t0}
        _emit(out_dir, cfg, "ok", extras, quiet=True)
        return 0

    weight = build_weight(cfg)
    potential = build_potential(cfg, weight, grid)

    if cfg.mode == "solve-orlicz-general":
        mu = build_measure(cfg, grid)
        if not hemisphere_check(mu).passed:
            raise SpecError("measure support is contained in a closed hemisphere")
        solver = cfg.solver
        result = solve_general_orlicz(
            mu, weight, potential,
            epsilon_schedule=solver["epsilon_schedule"],
            bandwidths=solver.get("bandwidths"),
            floor_fraction=solver["floor_fraction"],
            residual_tol=solver["residual_tol"],
            t_max=solver["t_max"],
            dt_max=solver["dt_max"],
            max_steps=solver["max_steps"],
            trace_stride=solver["trace_stride"],
        )
        stage_rows = [
            {"bandwidth": s.bandwidth, "epsilon": s.epsilon, "status": s.status.value,
             "gamma": s.gamma, "residual": s.residual, "widths": list(s.widths)}
            for s in result.stages
        ]
        worst = max(result.stages, key=lambda s: s.status.exit_code).status
        extras = {
            "final_residual": stage_rows[-1]["residual"],
            "gamma": result.gamma,
            "stages": stage_rows,
            "min_segment_norm": result.min_segment_norm,
            "width_bounds": [result.width_lower_bound, result.width_upper_bound],
            "widths": list(result.widths),
            "warnings": result.warnings,
            "wall_time": time.perf_counter() - t0,
        }
        label = "converged" if worst == FlowStatus.CONVERGED else worst.value
        _emit(out_dir, cfg, label, extras, trace=result.final_trace, body=result.h_final, quiet=quiet)
        return worst.exit_code

    # flow and solve-christoffel
    f = build_f(cfg, grid)
    if cfg.mode == "solve-christoffel":
        k = int(cfg.flow.get("k", 1))
        p = float(cfg.weight["p"])
        if cfg.body.get("kind") == "sphere" and "radius" not in cfg.body:
            # no explicit start: largest safe origin-centered sphere
            h0 = constant_field(grid, default_christoffel_radius(f, p, k))
        else:
            h0 = build_body(cfg, grid)
        spec = FlowSpec(kind="christoffel", f=f, initial=h0, p=p, k=k)
    else:
        kind = cfg.flow["kind"]
        h0 = build_body(cfg, grid)
        reg = None
        if kind == "regularized":
            reg = make_regularized(weight, grid.dim, float(cfg.flow["epsilon"]))
        spec = FlowSpec(kind=kind, f=f, initial=h0, weight=weight, potential=potential,
                        regularized=reg, c2=cfg.weight.get("c2"))

    solver = cfg.solver
    result = run(
        spec,
        residual_tol=solver["residual_tol"],
        t_max=solver["t_max"],
        dt_max=solver["dt_max"],
        max_steps=solver["max_steps"],
        stall_window=solver["stall_window"],
        trace_stride=solver["trace_stride"],
    )
    extras = _flow_extras(result)
    extras["wall_time"] = time.perf_counter() - t0
    if cfg.mode == "solve-christoffel" or cfg.flow.get("kind") == "unnormalized":
        extras["hausdorff_to_unit_sphere"] = hausdorff_distance(
            result.h_final, constant_field(grid, 1.0)
        )
    _emit(out_dir, cfg, result.status.value, extras, trace=result.trace,
          body=result.h_final, quiet=quiet)
    return result.status.exit_code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="minkflow",
        description="Curvature-flow solvers for Minkowski-type problems on support-function grids.",
        epilog=_EPILOG,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, mode in _MODE_BY_COMMAND.items():
        p = sub.add_parser(name, help=f"run mode {mode}", epilog=_EPILOG)
        p.add_argument("--config", required=True, help="path to the YAML run config")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="seed override for random bodies")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 1
    expected = _MODE_BY_COMMAND[args.command]
    if cfg.mode != expected:
        print(f"config error: subcommand {args.command!r} runs mode {expected!r} "
              f"but the config declares mode {cfg.mode!r}", file=sys.stderr)
        return 1
    try:
        return run_mode(cfg, args.out, seed=args.seed, quiet=args.quiet)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 1
    except MinkflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
