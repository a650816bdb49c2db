"""Support-function calculus on sphere grids.

A convex body K is represented by samples of its support function
h(u) = sup_{v in K} <u, v> on a :class:`~minkflow.grids.SphereGrid`.  The
principal radii of curvature are the eigenvalues of the radii matrix

    r_ij = (tangential Hessian of h)_ij + delta_ij * h

in a local orthonormal frame; sigma_k of those eigenvalues gives curvature
data, sigma_n the density of the surface area measure.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import ConvexityError, GridError
from .grids import (
    BALL_VOLUME,
    SphereGrid,
    circle_derivatives,
    sphere_derivatives,
    tangent_frames,
)


@dataclass(frozen=True, eq=False)
class SupportField:
    """Scalar samples (support function or any scalar field) on a grid."""

    grid: SphereGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.n_nodes,):
            values = values.reshape(self.grid.n_nodes)
        if not np.all(np.isfinite(values)):
            raise ValueError("support field has non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def is_positive(self) -> bool:
        return float(np.min(self.values)) > 0.0


@dataclass(frozen=True, eq=False)
class RadiiField:
    """Per-node symmetric radii matrices r_ij and the tangent frames used."""

    grid: SphereGrid
    matrices: np.ndarray   # (N, dim, dim)
    frames: np.ndarray     # (N, dim, dim+1)


# ---------------------------------------------------------------------------
# Body constructors
# ---------------------------------------------------------------------------

def constant_field(grid: SphereGrid, value: float) -> SupportField:
    """Support function of the origin-centered sphere of radius ``value``."""
    return SupportField(grid, np.full(grid.n_nodes, float(value)))


def linear_field(grid: SphereGrid, v) -> SupportField:
    """The function u -> <u, v> (support function of the point {v})."""
    return SupportField(grid, grid.nodes @ np.asarray(v, dtype=float))


def segment_field(grid: SphereGrid, v) -> SupportField:
    """Support function u -> |<u, v>| of the segment joining -v and v."""
    return SupportField(grid, np.abs(grid.nodes @ np.asarray(v, dtype=float)))


def ellipsoid_field(grid: SphereGrid, semi_axes) -> SupportField:
    """Origin-centered ellipsoid: h(u) = sqrt(sum (a_i u_i)^2)."""
    a = np.asarray(semi_axes, dtype=float)
    if a.shape != (grid.dim + 1,):
        raise GridError(f"need {grid.dim + 1} semi-axes, got {a.shape}")
    if np.min(a) <= 0:
        raise ValueError("semi-axes must be positive")
    return SupportField(grid, np.sqrt((grid.nodes**2) @ (a**2)))


def perturbed_sphere_field(
    grid: SphereGrid,
    radius: float = 1.0,
    amplitude: float = 1e-3,
    seed: int = 0,
    modes=(2, 3, 4),
    even: bool = True,
) -> SupportField:
    """Sphere of the given radius with a seeded band-limited perturbation.

    ``even`` keeps only antipodally symmetric content (even trig modes on the
    circle, even-degree quadratic harmonics on S^2), as o-symmetric flows
    require.  The perturbation is normalized to sup-norm ``amplitude``.
    """
    rng = np.random.default_rng(seed)
    if grid.dim == 1:
        use = [m for m in modes if (m % 2 == 0 or not even)]
        if not use:
            use = [2]
        eta = np.zeros(grid.n_nodes)
        for m in use:
            a, b = rng.standard_normal(2)
            eta += a * np.cos(m * grid.thetas) + b * np.sin(m * grid.thetas)
    else:
        u = grid.nodes
        A = rng.standard_normal((3, 3))
        A = 0.5 * (A + A.T)
        A -= np.eye(3) * np.trace(A) / 3.0
        eta = np.einsum("ni,ij,nj->n", u, A, u)
        if not even:
            eta = eta + 0.5 * (u @ rng.standard_normal(3))
    sup = np.max(np.abs(eta))
    if sup > 0:
        eta *= amplitude / sup
    return SupportField(grid, radius * (1.0 + eta))


# ---------------------------------------------------------------------------
# Radii matrix and curvature polynomials
# ---------------------------------------------------------------------------

def radii_matrix(h: SupportField) -> RadiiField:
    """Radii matrix r_ij = Hess h + h * Id in the node's orthonormal frame.

    On S^1 this is the scalar h'' + h.  On S^2, with theta the polar angle and
    the frame (e_theta, e_phi),

        r_tt = h_tt + h
        r_tp = h_tp / sin(theta) - cos(theta) h_p / sin^2(theta)
        r_pp = h_pp / sin^2(theta) + cot(theta) h_t + h

    which annihilates linear functions <u, v> exactly in the continuum.
    """
    grid = h.grid
    n = grid.n_nodes
    frames = tangent_frames(grid)
    if grid.dim == 1:
        _, d2 = circle_derivatives(grid, h.values)
        mats = (d2 + h.values).reshape(n, 1, 1)
        return RadiiField(grid, mats, frames)

    n_lat, n_lon = grid.resolution
    d = sphere_derivatives(grid, h.values)
    H = h.values.reshape(n_lat, n_lon)
    sin_t = np.sin(grid.thetas)[:, None]
    cos_t = np.cos(grid.thetas)[:, None]
    r_tt = d["tt"] + H
    r_tp = d["tp"] / sin_t - cos_t * d["p"] / sin_t**2
    r_pp = d["pp"] / sin_t**2 + cos_t / sin_t * d["t"] + H
    mats = np.empty((n, 2, 2))
    mats[:, 0, 0] = r_tt.ravel()
    mats[:, 0, 1] = mats[:, 1, 0] = r_tp.ravel()
    mats[:, 1, 1] = r_pp.ravel()
    return RadiiField(grid, mats, frames)


def radii_eigenvalues(r: RadiiField) -> np.ndarray:
    """Eigenvalues of each radii matrix, ascending, shape (N, dim)."""
    m = r.matrices
    if r.grid.dim == 1:
        return m[:, :, 0]
    half_tr = 0.5 * (m[:, 0, 0] + m[:, 1, 1])
    disc = np.sqrt(np.maximum(0.25 * (m[:, 0, 0] - m[:, 1, 1]) ** 2 + m[:, 0, 1] ** 2, 0.0))
    return np.column_stack([half_tr - disc, half_tr + disc])


def sigma_n(r: RadiiField) -> SupportField:
    """Determinant of r_ij per node: density of the surface area measure."""
    m = r.matrices
    if r.grid.dim == 1:
        vals = m[:, 0, 0]
    else:
        vals = m[:, 0, 0] * m[:, 1, 1] - m[:, 0, 1] ** 2
    return SupportField(r.grid, vals)


def sigma_k(r: RadiiField, k: int) -> SupportField:
    """k-th elementary symmetric polynomial of the radii eigenvalues."""
    n = r.grid.dim
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= {n}, got k={k}")
    m = r.matrices
    if k == 1:
        vals = np.trace(m, axis1=1, axis2=2)
    else:
        vals = m[:, 0, 0] * m[:, 1, 1] - m[:, 0, 1] ** 2
    return SupportField(r.grid, vals)


def curvature_F(r: RadiiField, k: int) -> SupportField:
    """Normalized curvature function F = (sigma_k / C(n, k))^(1/k), F(1,..,1)=1.

    Raises :class:`ConvexityError` when k >= 2 and sigma_k is not positive,
    where the k-th root is ill defined.
    """
    n = r.grid.dim
    sk = sigma_k(r, k).values / comb(n, k)
    if k == 1:
        return SupportField(r.grid, sk)
    if np.min(sk) <= 0.0:
        raise ConvexityError("sigma_k <= 0 somewhere; curvature function undefined")
    return SupportField(r.grid, sk ** (1.0 / k))


# ---------------------------------------------------------------------------
# Scalar diagnostics
# ---------------------------------------------------------------------------

def min_radii_eigenvalue(h: SupportField, r: RadiiField | None = None) -> float:
    """Global minimum over nodes of the smallest radii eigenvalue."""
    r = r if r is not None else radii_matrix(h)
    return float(np.min(radii_eigenvalues(r)[:, 0]))


def is_strictly_convex(h: SupportField, tol: float | None = None) -> bool:
    """min radii eigenvalue > tol; default tol is 1e-8 * max h (scale-aware)."""
    if tol is None:
        tol = 1e-8 * float(np.max(np.abs(h.values)))
    return min_radii_eigenvalue(h) > tol


def volume(h: SupportField, r: RadiiField | None = None, check_convex: bool = True) -> float:
    """Enclosed volume, (1/(n+1)) * integral of h * sigma_n.

    Flags non-convex input with :class:`ConvexityError` when ``check_convex``.
    """
    r = r if r is not None else radii_matrix(h)
    if check_convex and np.min(radii_eigenvalues(r)[:, 0]) <= 0.0:
        raise ConvexityError("volume of a non-convex field (min radii eigenvalue <= 0)")
    s = sigma_n(r).values
    return h.grid.integrate(h.values * s) / (h.grid.dim + 1)


def ball_volume(dim: int, radius: float = 1.0) -> float:
    """|B^{dim+1}| * radius^(dim+1)."""
    return BALL_VOLUME[dim] * radius ** (dim + 1)


def widths(h: SupportField) -> tuple[float, float]:
    """(w_minus, w_plus): min and max over nodes of h(u) + h(-u)."""
    s = h.values + h.grid.antipodal_values(h.values)
    return float(np.min(s)), float(np.max(s))


def barycenter_of_surface_measure(h: SupportField, r: RadiiField | None = None) -> np.ndarray:
    """Quadrature of u * sigma_n(u); vanishes for any closed convex body.

    Its norm is a discretization-quality diagnostic.
    """
    r = r if r is not None else radii_matrix(h)
    s = sigma_n(r).values
    return (h.grid.weights * s) @ h.grid.nodes


def hausdorff_distance(h1: SupportField, h2: SupportField) -> float:
    """max |h1 - h2| over nodes; requires a shared grid."""
    if h1.grid is not h2.grid and (
        h1.grid.dim != h2.grid.dim or h1.grid.resolution != h2.grid.resolution
    ):
        raise GridError("hausdorff_distance needs both fields on the same grid")
    return float(np.max(np.abs(h1.values - h2.values)))


def evenness_defect(h: SupportField) -> float:
    """max |h(u) - h(-u)|; zero for o-symmetric bodies."""
    return float(np.max(np.abs(h.values - h.grid.antipodal_values(h.values))))


# ---------------------------------------------------------------------------
# Boundary points and mesh export
# ---------------------------------------------------------------------------

def boundary_points(h: SupportField) -> np.ndarray:
    """Boundary embedding x(u) = h(u) u + grad h(u), shape (N, dim+1)."""
    grid = h.grid
    frames = tangent_frames(grid)
    if grid.dim == 1:
        d1, _ = circle_derivatives(grid, h.values)
        return h.values[:, None] * grid.nodes + d1[:, None] * frames[:, 0]
    d = sphere_derivatives(grid, h.values)
    g_t = d["t"].ravel()
    g_p = (d["p"] / np.sin(grid.thetas)[:, None]).ravel()
    return h.values[:, None] * grid.nodes + g_t[:, None] * frames[:, 0] + g_p[:, None] * frames[:, 1]


def _pole_vertices(grid: SphereGrid, xyz: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Interpolate boundary coordinates to the two poles.

    Each Cartesian component is a smooth scalar on the sphere, so the 4-point
    mid-cell formula across the pole (rows 0, 1 paired with their half-period
    longitude shifts) gives a 4th-order pole value; estimates from all
    longitudes are averaged.
    """
    n_lat, n_lon = grid.resolution
    V = xyz.reshape(n_lat, n_lon, 3)
    shift = n_lon // 2
    north = (9.0 * (V[0] + np.roll(V[0], shift, axis=0)) - (V[1] + np.roll(V[1], shift, axis=0))) / 16.0
    south = (9.0 * (V[-1] + np.roll(V[-1], shift, axis=0)) - (V[-2] + np.roll(V[-2], shift, axis=0))) / 16.0
    return north.mean(axis=0), south.mean(axis=0)


def export_mesh(h: SupportField, path) -> None:
    """Write the boundary as geometry files.

    dim 1: CSV polyline with columns theta,x,y (closed implicitly).
    dim 2: OFF mesh (vertex list + triangular faces) with pole fans.
    """
    xyz = boundary_points(h)
    grid = h.grid
    if grid.dim == 1:
        with open(path, "w") as fh:
            fh.write("theta,x,y\n")
            for t, (x, y) in zip(grid.thetas, xyz):
                fh.write(f"{float(t)!r},{float(x)!r},{float(y)!r}\n")
        return

    n_lat, n_lon = grid.resolution
    north, south = _pole_vertices(grid, xyz)
    verts = np.vstack([xyz, north, south])
    i_n, i_s = len(verts) - 2, len(verts) - 1
    faces = []
    idx = lambda j, k: j * n_lon + (k % n_lon)
    for k in range(n_lon):
        faces.append((i_n, idx(0, k + 1), idx(0, k)))
        faces.append((i_s, idx(n_lat - 1, k), idx(n_lat - 1, k + 1)))
    for j in range(n_lat - 1):
        for k in range(n_lon):
            a, b = idx(j, k), idx(j, k + 1)
            c, d = idx(j + 1, k), idx(j + 1, k + 1)
            faces.append((a, b, d))
            faces.append((a, d, c))
    with open(path, "w") as fh:
        fh.write("OFF\n")
        fh.write(f"{len(verts)} {len(faces)} 0\n")
        for v in verts:
            fh.write(f"{float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for f in faces:
            fh.write(f"3 {f[0]} {f[1]} {f[2]}\n")
