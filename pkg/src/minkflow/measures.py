"""Finite Borel measures on the sphere: densities, atoms, mollification,
hemisphere checks, and minimal segment norms.

Measures are stored as a nonnegative nodal density with respect to the
spherical Lebesgue measure, a list of atoms (direction, mass), or both.
Mollification turns atoms into smooth compactly-supported densities while
conserving mass, the approximation step that feeds atomic data into the
regular solvers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import MeasureError, SpecError
from .geometry import SupportField
from .grids import SphereGrid
from .weights import orlicz_norm


@dataclass(frozen=True, eq=False)
class SphereMeasure:
    """Finite Borel measure: nodal density and/or atoms; immutable."""

    grid: SphereGrid
    density: np.ndarray | None
    atom_dirs: np.ndarray | None
    atom_masses: np.ndarray | None
    even: bool
    total: float

    def integrate(self, g) -> float:
        """Integral of g against the measure; g is a nodal array or callable."""
        acc = 0.0
        if self.density is not None:
            vals = np.asarray(g(self.grid.nodes) if callable(g) else g, dtype=float)
            acc += (self.grid.weights * self.density) @ vals
        if self.atom_dirs is not None:
            if not callable(g):
                raise MeasureError("atomic measures need g as a callable of directions")
            acc += self.atom_masses @ np.asarray(g(self.atom_dirs), dtype=float)
        return float(acc)


def _check_even_density(grid: SphereGrid, density: np.ndarray) -> bool:
    scale = max(float(np.max(density)), 1e-300)
    return float(np.max(np.abs(density - grid.antipodal_values(density)))) <= 1e-10 * scale


def _check_even_atoms(dirs: np.ndarray, masses: np.ndarray) -> bool:
    # every atom must have an antipodal partner of equal mass
    used = np.zeros(len(dirs), dtype=bool)
    for i in range(len(dirs)):
        if used[i]:
            continue
        d = np.linalg.norm(dirs + dirs[i], axis=1)
        cand = np.where((d < 1e-10) & ~used)[0]
        cand = [j for j in cand if j != i and abs(masses[j] - masses[i]) <= 1e-10 * masses[i]]
        if not cand:
            return False
        used[i] = used[cand[0]] = True
    return True


def measure_from_density(grid: SphereGrid, density, even: bool = False) -> SphereMeasure:
    density = np.asarray(density, dtype=float).reshape(grid.n_nodes)
    if np.min(density) < 0 or not np.all(np.isfinite(density)):
        raise MeasureError("density must be finite and nonnegative")
    total = grid.integrate(density)
    if total <= 0:
        raise MeasureError("measure must have positive total mass")
    if even and not _check_even_density(grid, density):
        raise MeasureError("density flagged even is not antipodally symmetric")
    density = density.copy()
    density.setflags(write=False)
    return SphereMeasure(grid, density, None, None, even, total)


def measure_from_atoms(grid: SphereGrid, directions, masses, even: bool = False) -> SphereMeasure:
    dirs = np.asarray(directions, dtype=float).reshape(-1, grid.dim + 1)
    masses = np.asarray(masses, dtype=float).reshape(-1)
    if len(dirs) == 0 or len(dirs) != len(masses):
        raise MeasureError("need matching nonempty atom directions and masses")
    norms = np.linalg.norm(dirs, axis=1)
    if np.max(np.abs(norms - 1.0)) > 1e-9:
        dirs = dirs / norms[:, None]
    if np.min(masses) <= 0:
        raise MeasureError("atom masses must be positive")
    if even and not _check_even_atoms(dirs, masses):
        raise MeasureError("atoms flagged even are not antipodally paired")
    dirs.setflags(write=False)
    masses.setflags(write=False)
    return SphereMeasure(grid, None, dirs, masses, even, float(masses.sum()))


def from_density_f(f: SupportField) -> SphereMeasure:
    """The measure with density 1/f (f positive): the natural data measure of
    an anisotropy function f."""
    if np.min(f.values) <= 0:
        raise MeasureError("from_density_f needs f > 0 at all nodes")
    even = _check_even_density(f.grid, f.values)
    return measure_from_density(f.grid, 1.0 / f.values, even=even)


# ---------------------------------------------------------------------------
# Mollification
# ---------------------------------------------------------------------------

def mollify_atoms(mu: SphereMeasure, bandwidth: float) -> SphereMeasure:
    """Replace atoms by normalized smooth bumps on geodesic caps.

    Kernel: exp(-1/(1 - (angle/bandwidth)^2)) inside the cap, 0 outside, each
    bump normalized by quadrature so the atom's mass is conserved exactly up
    to roundoff.  Preserves the even flag (antipodally paired atoms give an
    even density) and invariance under any isometry fixing the atom set.
    """
    if mu.atom_dirs is None:
        raise MeasureError("mollify_atoms needs a measure with atoms")
    if not 0.0 < bandwidth <= np.pi / 4:
        raise MeasureError(f"bandwidth must lie in (0, pi/4], got {bandwidth}")
    grid = mu.grid
    density = np.zeros(grid.n_nodes)
    if mu.density is not None:
        density += mu.density
    cosang = np.clip(grid.nodes @ mu.atom_dirs.T, -1.0, 1.0)
    angles = np.arccos(cosang)
    for j, mass in enumerate(mu.atom_masses):
        t = angles[:, j] / bandwidth
        inside = t < 1.0
        if np.count_nonzero(inside) < 5:
            raise MeasureError(
                f"bandwidth {bandwidth} too small for the grid: cap holds "
                f"{np.count_nonzero(inside)} nodes (< 5)"
            )
        bump = np.zeros(grid.n_nodes)
        bump[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
        norm = grid.integrate(bump)
        density += mass * bump / norm
    return measure_from_density(grid, density, even=mu.even)


# ---------------------------------------------------------------------------
# Hemisphere concentration and segment norms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HemisphereReport:
    min_plus: float
    passed: bool
    direction: np.ndarray


def hemisphere_check(mu: SphereMeasure, delta: float = 1e-6, even: bool | None = None) -> HemisphereReport:
    """Minimal mass seen by half-space (or segment) support functions.

    Computes min over grid directions v of the integral of <u, v>_+ dmu; an
    even measure is instead tested against |<u, v>| (concentration on a great
    subsphere).  Passes when the minimum exceeds delta * |mu|.
    """
    if mu.total <= 0:
        raise MeasureError("hemisphere_check needs positive total mass")
    use_even = mu.even if even is None else even
    grid = mu.grid
    cand = grid.nodes
    best = np.inf
    best_v = cand[0]
    dens_w = None if mu.density is None else grid.weights * mu.density
    block = 512
    for start in range(0, len(cand), block):
        V = cand[start:start + block]
        gram = grid.nodes @ V.T
        vals = np.abs(gram) if use_even else np.maximum(gram, 0.0)
        acc = np.zeros(V.shape[0])
        if dens_w is not None:
            acc += dens_w @ vals
        if mu.atom_dirs is not None:
            agram = mu.atom_dirs @ V.T
            avals = np.abs(agram) if use_even else np.maximum(agram, 0.0)
            acc += mu.atom_masses @ avals
        i = int(np.argmin(acc))
        if acc[i] < best:
            best, best_v = float(acc[i]), V[i]
    return HemisphereReport(best, best > delta * mu.total, np.array(best_v))


def _segment_fn(v: np.ndarray, even: bool):
    if even:
        return lambda u: np.abs(np.asarray(u) @ v)
    return lambda u: np.maximum(np.asarray(u) @ v, 0.0)


def min_segment_orlicz_norm(
    mu: SphereMeasure,
    pot,
    even: bool = False,
    candidate_stride: int | None = None,
) -> float:
    """min over directions v of the Orlicz norm of u -> <u, v>_+ (or |<u, v>|
    in even mode); the quantity behind the a-priori width bounds.

    The minimum is taken over grid nodes (optionally strided on S^2 where the
    candidate set is large); on the circle the best node is refined by a
    bounded scalar search, since the minimized function is Lipschitz in v.
    """
    if not hemisphere_check(mu, even=even).passed:
        raise SpecError("measure is hemisphere-concentrated; segment norms degenerate")
    grid = mu.grid
    stride = candidate_stride or (1 if grid.dim == 1 else max(1, grid.n_nodes // 512))
    cand = grid.nodes[::stride]
    norms = np.array([orlicz_norm(_segment_fn(v, even), pot, mu) for v in cand])
    i = int(np.argmin(norms))
    best = float(norms[i])
    if grid.dim == 1:
        theta0 = np.arctan2(cand[i][1], cand[i][0])
        dt = 2.0 * np.pi / grid.resolution[0] * stride

        def objective(a):
            return orlicz_norm(_segment_fn(np.array([np.cos(a), np.sin(a)]), even), pot, mu)

        res = minimize_scalar(objective, bounds=(theta0 - dt, theta0 + dt), method="bounded",
                              options={"xatol": 1e-10})
        best = min(best, float(res.fun))
    return best
