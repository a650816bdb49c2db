"""Support-function curvature flows with adaptive explicit stepping.

Four flow kinds evolve a strictly convex body's support function h:

    normalized:    dh/dt = f h w(h) sigma_n - zeta(t) h   (zeta keeps E fixed)
    unnormalized:  dh/dt = f h w(h) sigma_n - h
    regularized:   dh/dt = f h w_eps(h) sigma_n - zeta_eps(t) h
    christoffel:   dh/dt = f h^(2-p) F^k - h,  F = (sigma_k / C(n,k))^(1/k)

Stationary states solve f w(h) sigma_n = gamma (gamma = zeta resp. 1) or
f h^(1-p) F^k = 1.  Time stepping is Heun (explicit RK2) with a step cap from
the parabolic stability limit of the linearized speed, a relative-change cap,
and convexity/positivity guards that halve dt and retry on violation.  On S^2
a longitudinal spectral filter removes modes unresolvable near the poles so
the stability cap scales with the latitude spacing.

Monotone/conserved diagnostics (enclosed volume, the energy integral, their
difference, widths, residual) are tracked every accepted step; violations
beyond 1e-10 relative abort the run rather than being papered over.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .errors import SpecError
from .geometry import (
    SupportField,
    constant_field,
    evenness_defect,
    radii_matrix,
    radii_eigenvalues,
    sigma_n as _sigma_n_field,
)
from .grids import (
    BALL_VOLUME,
    D2_SYMBOL_MAX,
    SphereGrid,
    circle_derivatives,
    polar_filter_mask,
    sphere_derivatives,
)
from .measures import SphereMeasure, hemisphere_check, measure_from_density, min_segment_orlicz_norm, mollify_atoms
from .weights import PotentialSpec, RegularizedWeight, WeightSpec, make_regularized

KINDS = ("normalized", "unnormalized", "regularized", "christoffel")

TRACE_COLUMNS = ("t", "E", "V", "VminusE", "eta", "hmin", "hmax",
                 "wminus", "wplus", "mineig", "residual", "dt")

_C_STAB = {1: 0.30, 2: 0.13}   # safety x RK2 real-axis limit / stencil symbol
_GROWTH = 1.3
_REL_CHANGE_CAP = 0.05
_MAX_RETRIES = 20
_MONOTONE_SLACK = 1e-10
_EVENNESS_TOL = 1e-8


class FlowStatus(enum.Enum):
    CONVERGED = "converged"
    TIMEOUT = "timeout"
    STALLED = "stalled (subconvergence not promoted)"
    COLLAPSE = "collapse"
    INVARIANT_VIOLATION = "invariant violation"

    @property
    def exit_code(self) -> int:
        return {
            FlowStatus.CONVERGED: 0,
            FlowStatus.TIMEOUT: 2,
            FlowStatus.STALLED: 2,
            FlowStatus.COLLAPSE: 3,
            FlowStatus.INVARIANT_VIOLATION: 4,
        }[self]


@dataclass(eq=False)
class FlowSpec:
    """Flow kind, data, and initial body.  Validated by ``validate_flow_spec``."""

    kind: str
    f: SupportField
    initial: SupportField
    weight: WeightSpec | None = None
    potential: PotentialSpec | None = None
    regularized: RegularizedWeight | None = None
    p: float | None = None
    k: int | None = None
    c2: float | None = None


@dataclass(eq=False)
class FlowState:
    h: SupportField
    t: float
    dt: float
    step_count: int
    diagnostics: dict


@dataclass(eq=False)
class FlowTrace:
    """Diagnostics per accepted step (thinned by the trace stride)."""

    columns: tuple = TRACE_COLUMNS
    rows: list = field(default_factory=list)

    def append(self, row):
        self.rows.append(tuple(row))

    def as_array(self) -> np.ndarray:
        return np.array(self.rows, dtype=float)

    def column(self, name: str) -> np.ndarray:
        return self.as_array()[:, self.columns.index(name)]

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(",".join(self.columns) + "\n")
            for row in self.rows:
                fh.write(",".join(repr(float(x)) for x in row) + "\n")


@dataclass(eq=False)
class FlowResult:
    h_final: SupportField
    gamma: float
    trace: FlowTrace
    status: FlowStatus
    message: str
    counters: dict
    warnings: list


# ---------------------------------------------------------------------------
# Spec validation
# ---------------------------------------------------------------------------

def _is_even_field(h: SupportField, tol: float = 1e-9) -> bool:
    return evenness_defect(h) <= tol * float(np.max(np.abs(h.values)))


def validate_flow_spec(spec: FlowSpec) -> list:
    """Check kind-specific preconditions; returns advisory warnings.

    Hard violations raise :class:`SpecError`: missing data, non-positive or
    non-convex initial body, Christoffel exponent/initial-condition failures,
    missing o-symmetry where the even theory requires it.
    """
    from .weights import energy as _energy

    if spec.kind not in KINDS:
        raise SpecError(f"unknown flow kind {spec.kind!r}; expected one of {KINDS}")
    grid = spec.initial.grid
    if spec.f.grid is not grid and spec.f.grid.resolution != grid.resolution:
        raise SpecError("f and the initial body must share a grid")
    if np.min(spec.f.values) <= 0:
        raise SpecError("anisotropy f must be positive")
    if np.min(spec.initial.values) <= 0:
        raise SpecError("initial support function must be positive")
    r0 = radii_matrix(spec.initial)
    eig0 = radii_eigenvalues(r0)
    if np.min(eig0[:, 0]) <= 0:
        raise SpecError("initial body must be strictly convex")

    warnings = []
    if spec.kind in ("normalized", "unnormalized"):
        if spec.weight is None or spec.potential is None:
            raise SpecError(f"{spec.kind} flows need both a weight and a potential")
    if spec.kind == "regularized" and spec.regularized is None:
        raise SpecError("regularized flows need a RegularizedWeight")

    if spec.kind == "normalized":
        if _is_even_field(spec.f) and not _is_even_field(spec.initial):
            raise SpecError("normalized flow with even f needs an o-symmetric initial body")
        if spec.potential.case == "3d":
            c2 = spec.c2 if spec.c2 is not None else spec.potential.c2
            if c2 is None:
                warnings.append("case-3d validity unverified: no C2 threshold supplied")
            else:
                e0 = _energy(spec.initial, spec.f, spec.potential)
                if not e0 > c2:
                    raise SpecError(f"case 3d needs initial energy > C2: {e0} <= {c2}")

    if spec.kind == "unnormalized":
        # hypothesis screening: s^n w(s) small at infinity, large at 0
        n = grid.dim
        probes_hi = float(np.asarray(spec.weight.evaluate(np.array([1e8])))[0]) * (1e8) ** n
        probes_lo = float(np.asarray(spec.weight.evaluate(np.array([1e-8])))[0]) * (1e-8) ** n
        if not probes_hi < 1.0 / float(np.max(spec.f.values)):
            warnings.append("contraction hypothesis probe failed at s=1e8 (flow may not converge)")
        if not probes_lo > 1.0 / float(np.min(spec.f.values)):
            warnings.append("expansion hypothesis probe failed at s=1e-8 (flow may not converge)")

    if spec.kind == "christoffel":
        n = grid.dim
        if spec.p is None or spec.k is None:
            raise SpecError("christoffel flows need exponent p and curvature order k")
        if not 1 <= spec.k <= n:
            raise SpecError(f"need 1 <= k <= n = {n}, got k={spec.k}")
        if not spec.p > spec.k + 1:
            raise SpecError(f"christoffel flows require p > k+1 = {spec.k + 1}, got p={spec.p}")
        q0 = _christoffel_quantity(grid, spec.initial.values, spec.f.values, spec.p, spec.k, r0)
        if np.min(q0) <= 1.0:
            raise SpecError(
                "initial body violates f h^(1-p) F^k > 1 "
                f"(min {np.min(q0):.6g}); start from a smaller sphere"
            )
        # sufficient convexity hypothesis on f, reported only
        fpow = SupportField(grid, spec.f.values ** (1.0 / (spec.p + spec.k - 1)))
        if np.min(radii_eigenvalues(radii_matrix(fpow))[:, 0]) <= 0:
            warnings.append("f^(1/(p+k-1)) is not spherically convex; existence hypothesis unverified")
    return warnings


def default_christoffel_radius(f: SupportField, p: float, k: int) -> float:
    """Largest safe origin-centered starting sphere: 0.9 (min f)^(1/(p-1-k))."""
    return 0.9 * float(np.min(f.values)) ** (1.0 / (p - 1.0 - k))


# ---------------------------------------------------------------------------
# Low-level field computations
# ---------------------------------------------------------------------------

def _radii_entries(grid: SphereGrid, h: np.ndarray):
    """Radii-matrix entries without dataclass overhead.

    Returns (m00,) for the circle and (m00, m01, m11) for S^2.
    """
    if grid.dim == 1:
        n = grid.resolution[0]
        dt2 = (2.0 * np.pi / n) ** 2
        d2 = (
            -np.roll(h, 2) + 16.0 * np.roll(h, 1) - 30.0 * h
            + 16.0 * np.roll(h, -1) - np.roll(h, -2)
        ) / (12.0 * dt2)
        return (d2 + h,)
    n_lat, n_lon = grid.resolution
    d = sphere_derivatives(grid, h)
    H = h.reshape(n_lat, n_lon)
    sin_t = np.sin(grid.thetas)[:, None]
    cos_t = np.cos(grid.thetas)[:, None]
    m00 = (d["tt"] + H).ravel()
    m01 = (d["tp"] / sin_t - cos_t * d["p"] / sin_t**2).ravel()
    m11 = (d["pp"] / sin_t**2 + cos_t / sin_t * d["t"] + H).ravel()
    return m00, m01, m11


def _eigs_from_entries(entries):
    if len(entries) == 1:
        m00 = entries[0]
        return m00, m00
    m00, m01, m11 = entries
    half_tr = 0.5 * (m00 + m11)
    disc = np.sqrt(np.maximum(0.25 * (m00 - m11) ** 2 + m01**2, 0.0))
    return half_tr - disc, half_tr + disc


def _sigma_n_from_entries(entries):
    if len(entries) == 1:
        return entries[0]
    m00, m01, m11 = entries
    return m00 * m11 - m01**2


def _sigma_k_from_entries(entries, k: int):
    if k == 1:
        return entries[0] if len(entries) == 1 else entries[0] + entries[2]
    return _sigma_n_from_entries(entries)


def _christoffel_quantity(grid, h, f, p, k, radii=None):
    """f h^(1-p) F^k with F = (sigma_k / C(n,k))^(1/k); the residual field."""
    entries = _radii_entries(grid, h) if radii is None else None
    if radii is not None:
        m = radii.matrices
        entries = (m[:, 0, 0],) if grid.dim == 1 else (m[:, 0, 0], m[:, 0, 1], m[:, 1, 1])
    sk = _sigma_k_from_entries(entries, k) / comb(grid.dim, k)
    return f * h ** (1.0 - p) * sk


# ---------------------------------------------------------------------------
# Public single-field operations
# ---------------------------------------------------------------------------

def zeta(h: SupportField, f: SupportField, weight) -> float:
    """Global normalization zeta = (int h sigma_n) / (int h / (f w(h)))."""
    grid = h.grid
    if np.min(h.values) <= 0:
        raise SpecError("zeta needs h > 0")
    entries = _radii_entries(grid, h.values)
    lo, _ = _eigs_from_entries(entries)
    if np.min(lo) <= 0:
        raise SpecError("zeta needs a strictly convex body")
    sig = _sigma_n_from_entries(entries)
    phi_h = np.asarray(weight.evaluate(h.values), dtype=float)
    num = grid.integrate(h.values * sig)
    den = grid.integrate(h.values / (f.values * phi_h))
    if den == 0.0:
        raise SpecError("zeta denominator vanished")
    return num / den


def rhs(h: SupportField, spec: FlowSpec) -> SupportField:
    """Per-node time derivative of the support function for ``spec``."""
    ev = _Engine(spec).evaluate(h.values, need_diag=False)
    if not ev["ok"]:
        raise SpecError(f"rhs undefined: {ev['reason']}")
    return SupportField(h.grid, ev["rhs"])


def residual(h: SupportField, spec: FlowSpec) -> float:
    """Sup-norm stationarity defect: |f w(h) sigma_n / gamma - 1| (gamma = zeta
    for normalized kinds, 1 otherwise) or |f h^(1-p) F^k - 1| (christoffel)."""
    ev = _Engine(spec).evaluate(h.values, need_diag=False)
    if not ev["ok"]:
        raise SpecError(f"residual undefined: {ev['reason']}")
    return ev["residual"]


def c0_barrier_check(h: SupportField, spec: FlowSpec) -> dict:
    """Barrier diagnostics for the unnormalized flow.

    Evaluates h_max (max_f w(h_max) h_max^n - 1), the upper barrier on the
    growth of max h, plus the contraction/expansion hypothesis probes.
    """
    if spec.kind != "unnormalized":
        raise SpecError("the C0 barrier applies to the unnormalized flow")
    n = h.grid.dim
    h_max = float(np.max(h.values))
    f_max = float(np.max(spec.f.values))
    f_min = float(np.min(spec.f.values))
    w_at = float(np.asarray(spec.weight.evaluate(np.array([h_max])))[0])
    bound = h_max * (f_max * w_at * h_max**n - 1.0)
    hi = float(np.asarray(spec.weight.evaluate(np.array([1e8])))[0]) * 1e8**n
    lo = float(np.asarray(spec.weight.evaluate(np.array([1e-8])))[0]) * 1e-8**n
    return {
        "h_max": h_max,
        "barrier_bound": bound,
        "hypothesis_upper_ok": bool(hi < 1.0 / f_max),
        "hypothesis_lower_ok": bool(lo > 1.0 / f_min),
    }


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------

class _Engine:
    """Precomputed per-run machinery; all evaluation is pure in h."""

    def __init__(self, spec: FlowSpec):
        self.spec = spec
        self.grid = spec.initial.grid
        grid = self.grid
        self.dim = grid.dim
        self.w = grid.weights
        self.f = spec.f.values
        self.mask = polar_filter_mask(grid) if grid.dim == 2 else None
        self.antipode = grid.antipode
        kind = spec.kind
        if kind in ("normalized", "unnormalized"):
            self.phi = spec.weight.evaluate
            self.pot = spec.potential.evaluate
            self.pot_sign = spec.potential.sign
        elif kind == "regularized":
            self.phi = spec.regularized.evaluate
            self.pot = spec.regularized.potential
            self.pot_sign = 1
        else:
            self.phi = None
            self.pot = None
            self.pot_sign = 1
        self.even_expected = kind in ("normalized", "regularized") and _is_even_field(
            spec.f
        ) and _is_even_field(spec.initial)
        dx = grid.min_angular_spacing
        self.stab_const = _C_STAB[grid.dim] * dx * dx

    def filter(self, h: np.ndarray) -> np.ndarray:
        if self.mask is None:
            return h
        from .grids import polar_filter

        return polar_filter(self.grid, h, self.mask)

    def evaluate(self, h: np.ndarray, need_diag: bool = True) -> dict:
        spec, grid = self.spec, self.grid
        n = self.dim
        hmin = float(np.min(h))
        if hmin <= 0.0 or not np.all(np.isfinite(h)):
            return {"ok": False, "reason": f"support function lost positivity (min {hmin:.3g} at node {int(np.argmin(h))})"}
        entries = _radii_entries(grid, h)
        lo, hi = _eigs_from_entries(entries)
        mineig = float(np.min(lo))
        if mineig <= 0.0:
            return {"ok": False, "reason": f"convexity lost (min radii eigenvalue {mineig:.3g} at node {int(np.argmin(lo))})"}
        sig = _sigma_n_from_entries(entries)

        if spec.kind == "christoffel":
            sk = _sigma_k_from_entries(entries, spec.k) / comb(n, spec.k)
            if np.min(sk) <= 0.0:
                return {"ok": False, "reason": "sigma_k lost positivity"}
            quantity = self.f * h ** (1.0 - spec.p) * sk     # = f h^(1-p) F^k
            rhs_vals = h * (quantity - 1.0)
            eta = 1.0
            gamma = 1.0
            resid = float(np.max(np.abs(quantity - 1.0)))
            theta_like = self.f * h ** (2.0 - spec.p)
            dgdr_max = (1.0 / n) if spec.k == 1 else hi
            diff_coef = float(np.max(theta_like * dgdr_max))
            phi_h = None
        else:
            phi_h = np.asarray(self.phi(h), dtype=float)
            theta = self.f * h * phi_h
            speed = theta * sig
            if spec.kind == "unnormalized":
                eta = 1.0
                gamma = 1.0
            else:
                num = self.w @ (h * sig)
                den = self.w @ (h / (self.f * phi_h))
                eta = num / den
                gamma = eta
            rhs_vals = speed - eta * h
            resid = float(np.max(np.abs(self.f * phi_h * sig / gamma - 1.0)))
            cof_max = 1.0 if n == 1 else hi
            diff_coef = float(np.max(theta * cof_max))

        out = {
            "ok": True, "reason": "", "rhs": rhs_vals, "sigma": sig, "mineig": mineig,
            "eta": eta, "gamma": gamma, "residual": resid, "diff_coef": diff_coef,
            "hmin": hmin, "hmax": float(np.max(h)),
        }
        if need_diag:
            out["V"] = float(self.w @ (h * sig)) / (n + 1)
            if self.pot is not None:
                out["E"] = float(self.w @ (np.asarray(self.pot(h), dtype=float) / self.f))
            else:
                out["E"] = float("nan")
            if self.antipode is not None:
                s = h + h[self.antipode]
            else:
                s = h + grid.antipodal_values(h)
            out["wminus"] = float(np.min(s))
            out["wplus"] = float(np.max(s))
        return out

    def dt_cap(self, ev: dict, dt_max: float) -> float:
        cap = min(dt_max, self.stab_const / max(ev["diff_coef"], 1e-300))
        max_rhs = float(np.max(np.abs(ev["rhs"])))
        if max_rhs > 0:
            cap = min(cap, _REL_CHANGE_CAP * ev["hmin"] / max_rhs)
        return cap


def _trace_row(t, ev, dt):
    return (t, ev["E"], ev["V"], ev["V"] - ev["E"], ev["eta"], ev["hmin"], ev["hmax"],
            ev["wminus"], ev["wplus"], ev["mineig"], ev["residual"], dt)


def run(
    spec: FlowSpec,
    *,
    residual_tol: float = 1e-6,
    t_max: float = 100.0,
    dt_max: float = 1e-2,
    max_steps: int = 5_000_000,
    stall_window: int = 500,
    stall_decrease: float = 1e-3,
    trace_stride: int = 1,
) -> FlowResult:
    """Integrate the flow until stationarity, timeout, stall, or failure.

    Success means residual <= residual_tol; the returned gamma is zeta at the
    final state for normalized kinds and 1 otherwise.  Stalls (residual
    decrease below ``stall_decrease`` relative over ``stall_window`` accepted
    steps) end the run with the partial result, since full convergence of the
    normalized flow is not guaranteed in general.
    """
    warnings = validate_flow_spec(spec)
    eng = _Engine(spec)
    grid = spec.initial.grid
    h = eng.filter(np.array(spec.initial.values, dtype=float))
    ev = eng.evaluate(h)
    if not ev["ok"]:
        raise SpecError(f"initial state invalid: {ev['reason']}")

    counters = {
        "steps": 0, "rejected": 0, "volume_violations": 0, "lyapunov_violations": 0,
        "evenness_violations": 0, "barrier_violations": 0, "energy_drift_max": 0.0,
        "min_christoffel_increase": float("inf"),
    }
    trace = FlowTrace()
    trace.append(_trace_row(0.0, ev, 0.0))
    t = 0.0
    dt_prev = None
    dt_first = None
    E0 = ev["E"]
    lyap_prev = None
    barrier_streak = 0
    monotone_streak = 0
    best_resid = ev["residual"]
    window_anchor = best_resid
    status, message = None, ""
    wall0 = time.perf_counter()

    while True:
        if ev["residual"] <= residual_tol:
            status, message = FlowStatus.CONVERGED, f"residual {ev['residual']:.3e} <= {residual_tol:.3e}"
            break
        if t >= t_max:
            status, message = FlowStatus.TIMEOUT, f"t_max {t_max} reached at residual {ev['residual']:.3e}"
            break
        if counters["steps"] >= max_steps:
            status, message = FlowStatus.TIMEOUT, f"max_steps {max_steps} reached at residual {ev['residual']:.3e}"
            break
        if counters["steps"] > 0 and counters["steps"] % stall_window == 0:
            if window_anchor - best_resid < stall_decrease * window_anchor:
                status = FlowStatus.STALLED
                message = f"residual stalled at {ev['residual']:.3e} over {stall_window} steps"
                break
            window_anchor = best_resid

        cap = eng.dt_cap(ev, dt_max)
        # first step starts well below the cap and grows geometrically
        dt = 0.1 * cap if dt_prev is None else min(dt_prev * _GROWTH, cap)
        if dt_first is None:
            dt_first = dt
        accepted = None
        reason = ""
        for _ in range(_MAX_RETRIES):
            if dt < 1e-14 * dt_first:
                break
            h_mid = h + dt * ev["rhs"]
            ev_mid = eng.evaluate(h_mid, need_diag=False)
            if not ev_mid["ok"]:
                reason = ev_mid["reason"]
                dt *= 0.5
                continue
            h_new = eng.filter(h + 0.5 * dt * (ev["rhs"] + ev_mid["rhs"]))
            ev_new = eng.evaluate(h_new)
            if not ev_new["ok"]:
                reason = ev_new["reason"]
                dt *= 0.5
                continue
            if spec.kind == "christoffel":
                inc = h_new - h
                min_inc = float(np.min(inc))
                if min_inc <= 0.0:
                    reason = f"monotone increase violated (min {min_inc:.3g})"
                    dt *= 0.5
                    counters["rejected"] += 1
                    continue
                q_new = spec.f.values * h_new ** (1.0 - spec.p) * (
                    _sigma_k_from_entries(_radii_entries(grid, h_new), spec.k) / comb(grid.dim, spec.k)
                )
                if np.min(q_new) <= 1.0 - 1e-12:
                    reason = "expansion inequality f h^(1-p) F^k > 1 lost"
                    dt *= 0.5
                    counters["rejected"] += 1
                    continue
                counters["min_christoffel_increase"] = min(counters["min_christoffel_increase"], min_inc)
            accepted = (h_new, ev_new)
            break
        if accepted is None:
            status = FlowStatus.COLLAPSE
            message = f"step size underflow at t={t:.6g} (last rejection: {reason or 'retry limit'})"
            break

        h, ev_old, ev = accepted[0], ev, accepted[1]
        t += dt
        dt_prev = dt
        counters["steps"] += 1
        best_resid = min(best_resid, ev["residual"])

        # per-step invariant accounting
        violated = False
        if spec.kind in ("normalized", "regularized"):
            if ev["V"] < ev_old["V"] - _MONOTONE_SLACK * abs(ev_old["V"]):
                counters["volume_violations"] += 1
                violated = True
            if np.isfinite(E0) and E0 != 0:
                counters["energy_drift_max"] = max(counters["energy_drift_max"], abs(ev["E"] - E0) / abs(E0))
        elif spec.kind == "unnormalized":
            lyap = ev["V"] - eng.pot_sign * ev["E"]
            if lyap_prev is not None and lyap < lyap_prev - _MONOTONE_SLACK * max(abs(lyap_prev), 1.0):
                counters["lyapunov_violations"] += 1
                violated = True
            lyap_prev = lyap
            # measured growth of max h against the barrier bound
            bound = ev_old["hmax"] * (
                float(np.max(spec.f.values))
                * float(np.asarray(spec.weight.evaluate(np.array([ev_old["hmax"]])))[0])
                * ev_old["hmax"] ** grid.dim
                - 1.0
            )
            measured = (ev["hmax"] - ev_old["hmax"]) / dt
            if measured > bound + 1e-2 * (1.0 + abs(bound)):
                counters["barrier_violations"] += 1
                barrier_streak += 1
            else:
                barrier_streak = 0
            if barrier_streak > 5:
                status = FlowStatus.INVARIANT_VIOLATION
                message = "C0 barrier violated over more than 5 consecutive steps"
                break
        if eng.even_expected:
            defect = evenness_defect(SupportField(grid, h))
            if defect > _EVENNESS_TOL * ev["hmax"]:
                counters["evenness_violations"] += 1
                violated = True
        monotone_streak = monotone_streak + 1 if violated else 0
        if monotone_streak >= 3:
            status = FlowStatus.INVARIANT_VIOLATION
            message = "monotonicity diagnostics violated on 3 consecutive steps"
            break
        if counters["steps"] % trace_stride == 0:
            trace.append(_trace_row(t, ev, dt))

    counters["wall_time"] = time.perf_counter() - wall0
    if trace.rows[-1][0] != t:
        trace.append(_trace_row(t, ev, dt_prev or 0.0))
    return FlowResult(
        SupportField(grid, h), ev["gamma"], trace, status, message, counters, warnings
    )


def initial_state(spec: FlowSpec) -> FlowState:
    eng = _Engine(spec)
    h = eng.filter(np.array(spec.initial.values, dtype=float))
    ev = eng.evaluate(h)
    if not ev["ok"]:
        raise SpecError(f"initial state invalid: {ev['reason']}")
    return FlowState(SupportField(spec.initial.grid, h), 0.0, 0.0, 0, ev)


def step(state: FlowState, spec: FlowSpec, *, dt_max: float = 1e-2) -> FlowState:
    """One accepted Heun step with the same guards as :func:`run`."""
    eng = _Engine(spec)
    h = state.h.values
    ev = state.diagnostics if state.diagnostics.get("ok") else eng.evaluate(h)
    cap = eng.dt_cap(ev, dt_max)
    dt = 0.1 * cap if state.dt == 0.0 else min(state.dt * _GROWTH, cap)
    for _ in range(_MAX_RETRIES):
        h_mid = h + dt * ev["rhs"]
        ev_mid = eng.evaluate(h_mid, need_diag=False)
        if ev_mid["ok"]:
            h_new = eng.filter(h + 0.5 * dt * (ev["rhs"] + ev_mid["rhs"]))
            ev_new = eng.evaluate(h_new)
            if ev_new["ok"]:
                return FlowState(SupportField(spec.initial.grid, h_new), state.t + dt,
                                 dt, state.step_count + 1, ev_new)
        dt *= 0.5
    raise SpecError("step rejected at the retry limit; body near collapse")


# ---------------------------------------------------------------------------
# General-measure pipeline
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class StageRecord:
    bandwidth: float | None
    epsilon: float
    status: FlowStatus
    gamma: float
    residual: float
    widths: tuple


@dataclass(eq=False)
class GeneralSolveResult:
    h_final: SupportField
    gamma: float
    stages: list
    min_segment_norm: float
    width_upper_bound: float
    width_lower_bound: float
    widths: tuple
    f_final: SupportField
    warnings: list
    final_trace: FlowTrace | None = None


def solve_general_orlicz(
    mu: SphereMeasure,
    weight: WeightSpec,
    potential: PotentialSpec,
    *,
    epsilon_schedule=(0.1, 0.05, 0.025),
    bandwidths=None,
    floor_fraction: float = 0.05,
    residual_tol: float = 1e-6,
    t_max: float = 200.0,
    dt_max: float = 1e-2,
    max_steps: int = 2_000_000,
    trace_stride: int = 10,
) -> GeneralSolveResult:
    """Solve the measure-data problem w(h) dS = gamma dmu by regularized flows.

    Atomic measures are mollified at each bandwidth; a uniform floor carrying
    ``floor_fraction`` of the mass keeps the density positive so f = 1/density
    exists (total mass is conserved and any symmetry of mu is preserved).
    For each epsilon the regularized normalized flow runs on f, warm-starting
    every stage after the first from the previous stage's body.  The flow's f
    is rescaled to max 1, a pure time reparametrization; reported gammas are
    in the unscaled units.  The returned body is checked against the a-priori
    width bounds derived from the minimal segment norm.
    """
    grid = mu.grid
    n = grid.dim
    if potential.case != "3a":
        raise SpecError("the general pipeline needs an increasing potential with basepoint 0 (case 3a)")
    warnings = list(potential.warnings)
    if not hemisphere_check(mu).passed:
        raise SpecError("measure support is contained in a closed hemisphere")
    if mu.even and not hemisphere_check(mu, even=True).passed:
        raise SpecError("even measure is concentrated on a great subsphere")
    if weight.kind == "power":
        needs = 0.0 if mu.even else 1.0
        if weight.p is not None and weight.p <= needs:
            warnings.append(
                f"weight exponent p={weight.p} is outside the guaranteed range (> {needs}); proceeding anyway"
            )

    if mu.atom_dirs is not None:
        if bandwidths is None:
            bandwidths = (0.3, 0.15)
        stages_mu = [(float(k), mollify_atoms(mu, k)) for k in bandwidths]
    else:
        stages_mu = [(None, mu)]

    area = grid.weights.sum()
    stages: list[StageRecord] = []
    h_prev = None
    result = None
    f_run_field = None
    mu_f_stage = None
    for kappa, mu_stage in stages_mu:
        density = np.array(mu_stage.density, dtype=float)
        if np.min(density) <= 1e-12 * np.max(density):
            density = (1.0 - floor_fraction) * density + floor_fraction * mu_stage.total / area
        mu_f_stage = measure_from_density(grid, density, even=mu_stage.even)
        f_raw = 1.0 / density
        scale = float(np.max(f_raw))
        f_run = SupportField(grid, f_raw / scale)
        f_run_field = f_run
        h0 = constant_field(grid, 1.0) if h_prev is None else h_prev
        for eps in epsilon_schedule:
            reg = make_regularized(weight, n, float(eps))
            spec = FlowSpec(kind="regularized", f=f_run, initial=h0, weight=weight,
                            regularized=reg)
            result = run(spec, residual_tol=residual_tol, t_max=t_max, dt_max=dt_max,
                         max_steps=max_steps, trace_stride=trace_stride)
            if result.status in (FlowStatus.COLLAPSE, FlowStatus.INVARIANT_VIOLATION):
                raise SpecError(
                    f"stage (bandwidth={kappa}, eps={eps}) failed: {result.status.value}: {result.message}"
                )
            h0 = result.h_final
            h_prev = result.h_final
            from .geometry import widths as _widths

            gamma_raw = result.gamma * scale
            stages.append(StageRecord(kappa, float(eps), result.status, gamma_raw,
                                      result.trace.rows[-1][TRACE_COLUMNS.index("residual")],
                                      _widths(result.h_final)))
            if result.status == FlowStatus.TIMEOUT:
                warnings.append(f"stage (bandwidth={kappa}, eps={eps}) hit t_max; partial result used")

    from .geometry import widths as _widths

    min_norm = min_segment_orlicz_norm(mu_f_stage, potential, even=False)
    w_minus, w_plus = _widths(result.h_final)
    upper = 4.0 / min_norm
    lower = (min_norm / 4.0) ** n * BALL_VOLUME[n]
    slack = 1e-9
    if w_plus > upper * (1.0 + slack) or w_minus < lower * (1.0 - slack):
        raise SpecError(
            "a-priori width bounds violated (discretization problem): "
            f"w+ = {w_plus:.6g} vs {upper:.6g}, w- = {w_minus:.6g} vs {lower:.6g}"
        )
    return GeneralSolveResult(
        result.h_final, stages[-1].gamma, stages, min_norm, upper, lower,
        (w_minus, w_plus), f_run_field, warnings, result.trace,
    )
