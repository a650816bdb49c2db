"""Sphere discretizations: nodes, quadrature weights, tangential derivatives.

The circle (dim 1) is a uniform periodic angle grid with trapezoidal weights
(spectrally accurate for smooth integrands) and order-4 centered stencils.

The 2-sphere (dim 2) is a latitude-longitude grid offset half a cell from the
poles, so no node sits on a coordinate singularity.  Latitude quadrature uses
Fejer's first rule (the offset latitudes are exactly its Chebyshev angles), so
weights are positive and sum to 4*pi to machine precision.  Derivatives use
order-6 centered stencils in both angles; latitude stencils are continued
across the poles by reflecting rows and shifting longitude by half a period.
Order 6 is needed because the 1/sin(theta) metric factors in the tangential
Hessian amplify the stencil error by one order on the pole-adjacent rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridError

SPHERE_AREA = {1: 2.0 * np.pi, 2: 4.0 * np.pi}

# Unit-ball volumes |B^{n+1}| (enclosed volume of the unit sphere S^n).
BALL_VOLUME = {1: np.pi, 2: 4.0 * np.pi / 3.0}

# Centered finite-difference coefficients, offsets -w..+w, divided by dx / dx^2.
_D1_ORDER4 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D2_ORDER4 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
_D1_ORDER6 = np.array([-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0]) / 60.0
_D2_ORDER6 = np.array([2.0, -27.0, 270.0, -490.0, 270.0, -27.0, 2.0]) / 180.0

#: Worst-case |symbol| * dx^2 of the second-derivative stencils, used for
#: explicit-step stability caps.
D2_SYMBOL_MAX = {4: 16.0 / 3.0, 6: 272.0 / 45.0}


def _fejer1_weights(n: int) -> np.ndarray:
    """Fejer first-rule weights for nodes x_j = cos((2j+1)pi/(2n)) on [-1, 1]."""
    j = np.arange(n)
    theta = (2 * j + 1) * np.pi / (2 * n)
    m = np.arange(1, n // 2 + 1)
    corr = 2.0 * np.sum(np.cos(2.0 * np.outer(theta, m)) / (4.0 * m**2 - 1.0), axis=1)
    return (2.0 / n) * (1.0 - corr)


@dataclass(frozen=True, eq=False)
class SphereGrid:
    """Discretization of S^dim (dim in {1, 2}) with quadrature weights.

    Invariants checked at construction: unit nodes (1e-12), positive weights,
    weight sum = |S^dim| within 1e-10 relative.  ``antipode`` is the exact
    node-index map u -> -u when the node set is closed under it, else None
    (circle grids with an odd node count).  Arrays are frozen read-only;
    instances are safe to share across threads.
    """

    dim: int
    resolution: tuple[int, ...]
    nodes: np.ndarray           # (N, dim+1) unit vectors
    weights: np.ndarray         # (N,) positive, sums to |S^dim|
    thetas: np.ndarray          # dim 1: node angles (N,); dim 2: latitudes (n_lat,)
    phis: np.ndarray | None     # dim 2 longitudes (n_lon,), else None
    antipode: np.ndarray | None

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def shape(self) -> tuple[int, ...]:
        """Logical array shape of a field on this grid."""
        if self.dim == 1:
            return (self.n_nodes,)
        return self.resolution

    @property
    def min_angular_spacing(self) -> float:
        """Angular mesh size controlling stencil resolution (pole clustering
        excluded; longitudinal modes beyond it must be filtered, see flows)."""
        if self.dim == 1:
            return 2.0 * np.pi / self.resolution[0]
        n_lat, n_lon = self.resolution
        return min(np.pi / n_lat, 2.0 * np.pi / n_lon)

    def integrate(self, values: np.ndarray) -> float:
        """Quadrature of a nodal scalar field against the sphere measure."""
        return float(self.weights @ np.asarray(values, dtype=float))

    def antipodal_values(self, values: np.ndarray) -> np.ndarray:
        """Field values at -u per node; exact index map or periodic interpolation."""
        values = np.asarray(values, dtype=float)
        if self.antipode is not None:
            return values[self.antipode]
        # Odd circle grid: -u(theta) = u(theta + pi) lands mid-cell; linear wrap.
        n = self.n_nodes
        pos = (np.arange(n) + n / 2.0) % n
        lo = np.floor(pos).astype(int)
        frac = pos - lo
        return (1.0 - frac) * values[lo % n] + frac * values[(lo + 1) % n]


def build_grid(dim: int, resolution) -> SphereGrid:
    """Build a sphere grid.

    ``resolution`` is a node count for dim 1 and a (latitude, longitude) pair
    for dim 2.  Dim-2 grids need latitude count >= 8 and an even longitude
    count >= 8 (cross-pole continuation shifts longitude by half a period).
    """
    if dim == 1:
        n = int(resolution if np.isscalar(resolution) else resolution[0])
        if n < 5:
            raise GridError(f"circle grid needs >= 5 nodes for the stencil, got {n}")
        thetas = 2.0 * np.pi * np.arange(n) / n
        nodes = np.column_stack([np.cos(thetas), np.sin(thetas)])
        weights = np.full(n, 2.0 * np.pi / n)
        antipode = (np.arange(n) + n // 2) % n if n % 2 == 0 else None
        grid = SphereGrid(1, (n,), nodes, weights, thetas, None, antipode)
    elif dim == 2:
        try:
            n_lat, n_lon = (int(r) for r in resolution)
        except TypeError:
            raise GridError("dim-2 resolution must be a (latitude, longitude) pair") from None
        if n_lat < 8:
            raise GridError(f"latitude count must be >= 8, got {n_lat}")
        if n_lon < 8 or n_lon % 2 != 0:
            raise GridError(f"longitude count must be even and >= 8, got {n_lon}")
        thetas = (np.arange(n_lat) + 0.5) * np.pi / n_lat
        phis = 2.0 * np.pi * np.arange(n_lon) / n_lon
        sin_t, cos_t = np.sin(thetas), np.cos(thetas)
        nodes = np.empty((n_lat * n_lon, 3))
        nodes[:, 0] = np.outer(sin_t, np.cos(phis)).ravel()
        nodes[:, 1] = np.outer(sin_t, np.sin(phis)).ravel()
        nodes[:, 2] = np.repeat(cos_t, n_lon)
        w_lat = _fejer1_weights(n_lat)
        weights = np.outer(w_lat, np.full(n_lon, 2.0 * np.pi / n_lon)).ravel()
        lat_idx = np.repeat(n_lat - 1 - np.arange(n_lat), n_lon)
        lon_idx = (np.tile(np.arange(n_lon), n_lat) + n_lon // 2) % n_lon
        antipode = lat_idx * n_lon + lon_idx
        grid = SphereGrid(2, (n_lat, n_lon), nodes, weights, thetas, phis, antipode)
    else:
        raise GridError(f"only S^1 and S^2 are supported, got dim={dim}")

    norms = np.linalg.norm(grid.nodes, axis=1)
    if np.max(np.abs(norms - 1.0)) > 1e-12:
        raise GridError("grid nodes are not unit vectors")
    if np.min(grid.weights) <= 0.0:
        raise GridError("quadrature weights must be strictly positive")
    total = grid.weights.sum()
    if abs(total - SPHERE_AREA[dim]) > 1e-10 * SPHERE_AREA[dim]:
        raise GridError(f"quadrature weights sum to {total}, expected {SPHERE_AREA[dim]}")
    for arr in (grid.nodes, grid.weights, grid.thetas) + ((grid.phis,) if grid.phis is not None else ()):
        arr.setflags(write=False)
    return grid


# ---------------------------------------------------------------------------
# Tangential derivatives
# ---------------------------------------------------------------------------

def _roll_stencil(values: np.ndarray, coeffs: np.ndarray, axis: int) -> np.ndarray:
    """Apply a centered stencil along a periodic axis."""
    w = len(coeffs) // 2
    out = coeffs[w] * values if coeffs[w] != 0.0 else np.zeros_like(values)
    for off in range(1, w + 1):
        if coeffs[w + off] != 0.0:
            out = out + coeffs[w + off] * np.roll(values, -off, axis=axis)
        if coeffs[w - off] != 0.0:
            out = out + coeffs[w - off] * np.roll(values, off, axis=axis)
    return out


def circle_derivatives(grid: SphereGrid, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(h', h'') on a circle grid, order-4 periodic stencils."""
    dt = 2.0 * np.pi / grid.resolution[0]
    d1 = _roll_stencil(values, _D1_ORDER4, 0) / dt
    d2 = _roll_stencil(values, _D2_ORDER4, 0) / dt**2
    return d1, d2


def _pole_pad(grid: SphereGrid, V: np.ndarray, rows: int) -> np.ndarray:
    """Extend a (n_lat, n_lon) scalar field by ``rows`` ghost rows past each
    pole: reflect latitudes and shift longitude by half a period.  Valid for
    any single-valued scalar on the sphere."""
    shift = grid.resolution[1] // 2
    top = np.roll(V[:rows][::-1], shift, axis=1)
    bot = np.roll(V[-rows:][::-1], shift, axis=1)
    return np.concatenate([top, V, bot], axis=0)


def _theta_stencil(grid: SphereGrid, V: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    w = len(coeffs) // 2
    P = _pole_pad(grid, V, w)
    n_lat = V.shape[0]
    out = np.zeros_like(V)
    for k, c in enumerate(coeffs):
        if c != 0.0:
            out += c * P[k:k + n_lat]
    return out


def sphere_derivatives(grid: SphereGrid, values: np.ndarray) -> dict[str, np.ndarray]:
    """First and second angular derivatives of a scalar field on S^2.

    Returns partial derivatives in (theta, phi) coordinates as (n_lat, n_lon)
    arrays: keys 't', 'p', 'tt', 'pp', 'tp'.  The mixed derivative applies the
    theta stencil to d/dphi, which extends evenly across the poles just like
    the field itself.
    """
    if grid.dim != 2:
        raise GridError("sphere_derivatives requires a dim-2 grid")
    n_lat, n_lon = grid.resolution
    V = np.asarray(values, dtype=float).reshape(n_lat, n_lon)
    dt = np.pi / n_lat
    dp = 2.0 * np.pi / n_lon

    h_p = _roll_stencil(V, _D1_ORDER6, 1) / dp
    h_pp = _roll_stencil(V, _D2_ORDER6, 1) / dp**2
    h_t = _theta_stencil(grid, V, _D1_ORDER6) / dt
    h_tt = _theta_stencil(grid, V, _D2_ORDER6) / dt**2
    h_tp = _theta_stencil(grid, h_p, _D1_ORDER6) / dt
    return {"t": h_t, "p": h_p, "tt": h_tt, "pp": h_pp, "tp": h_tp}


def tangent_frames(grid: SphereGrid) -> np.ndarray:
    """Orthonormal tangent basis per node: (N, dim, dim+1).

    dim 1: the counterclockwise tangent.  dim 2: (e_theta, e_phi) of spherical
    coordinates; well defined everywhere since no node sits on a pole.
    """
    if grid.dim == 1:
        t = np.column_stack([-np.sin(grid.thetas), np.cos(grid.thetas)])
        return t[:, None, :]
    n_lat, n_lon = grid.resolution
    theta = np.repeat(grid.thetas, n_lon)
    phi = np.tile(grid.phis, n_lat)
    e_t = np.column_stack([np.cos(theta) * np.cos(phi), np.cos(theta) * np.sin(phi), -np.sin(theta)])
    e_p = np.column_stack([-np.sin(phi), np.cos(phi), np.zeros_like(phi)])
    return np.stack([e_t, e_p], axis=1)


def polar_filter_mask(grid: SphereGrid) -> np.ndarray:
    """Boolean rfft mask keeping longitudinal modes resolvable at the local
    spacing: m <= sin(theta) * n_lat per latitude row.  Constant and zonal
    fields pass unchanged; the mask commutes with the antipodal map."""
    n_lat, n_lon = grid.resolution
    m = np.arange(n_lon // 2 + 1)
    m_max = np.minimum(n_lon // 2, np.maximum(1, np.ceil(np.sin(grid.thetas) * n_lat)))
    return m[None, :] <= m_max[:, None]


def polar_filter(grid: SphereGrid, values: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Remove longitudinal modes unresolvable near the poles (dim 2 only).

    Sharp spectral cutoff per latitude row; idempotent.  Explicit time
    stepping needs this so the stability limit scales with the latitude
    spacing instead of the vanishing near-pole longitude spacing.
    """
    if grid.dim != 2:
        return values
    n_lat, n_lon = grid.resolution
    V = np.asarray(values, dtype=float).reshape(n_lat, n_lon)
    if mask is None:
        mask = polar_filter_mask(grid)
    spec = np.fft.rfft(V, axis=1)
    spec *= mask
    return np.fft.irfft(spec, n=n_lon, axis=1).reshape(np.shape(values))
