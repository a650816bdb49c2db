import numpy as np
import pytest

from minkflow.errors import GridError
from minkflow.grids import SPHERE_AREA, build_grid, polar_filter, sphere_derivatives


@pytest.mark.parametrize("dim,res", [(1, 256), (1, 64), (2, (64, 128)), (2, (16, 32))])
def test_grid_invariants(dim, res):
    g = build_grid(dim, res)
    assert np.max(np.abs(np.linalg.norm(g.nodes, axis=1) - 1.0)) < 1e-12
    assert g.weights.min() > 0
    assert abs(g.weights.sum() - SPHERE_AREA[dim]) <= 1e-10 * SPHERE_AREA[dim]


def test_circle_grid_uniform():
    g = build_grid(1, 256)
    assert g.n_nodes == 256
    assert np.allclose(g.weights, 2 * np.pi / 256)
    assert np.allclose(np.diff(g.thetas), 2 * np.pi / 256)


def test_sphere_grid_node_count():
    g = build_grid(2, (64, 128))
    assert g.n_nodes == 64 * 128


def test_degenerate_resolution_rejected():
    with pytest.raises(GridError):
        build_grid(1, 2)
    with pytest.raises(GridError):
        build_grid(2, (4, 16))
    with pytest.raises(GridError):
        build_grid(2, (16, 15))  # odd longitude count
    with pytest.raises(GridError):
        build_grid(3, 10)


def test_antipodal_map_exact():
    for dim, res in [(1, 128), (2, (16, 32))]:
        g = build_grid(dim, res)
        assert g.antipode is not None
        assert np.max(np.abs(g.nodes[g.antipode] + g.nodes)) < 1e-12


def test_odd_circle_grid_interpolates_antipode():
    g = build_grid(1, 127)
    assert g.antipode is None
    vals = 1.0 + 0.25 * np.cos(2 * g.thetas)
    anti = g.antipodal_values(vals)
    exact = 1.0 + 0.25 * np.cos(2 * (g.thetas + np.pi))
    assert np.max(np.abs(anti - exact)) < 1e-3


def test_quadrature_spectral_accuracy():
    g = build_grid(2, (24, 48))
    u = g.nodes
    # low-order polynomial moments on the sphere have closed forms
    assert abs(g.integrate(u[:, 2] ** 2) - 4 * np.pi / 3) < 1e-12
    assert abs(g.integrate(u[:, 0] * u[:, 1])) < 1e-12
    assert abs(g.integrate(u[:, 2] ** 4) - 4 * np.pi / 5) < 1e-12


def test_sphere_derivatives_match_analytic():
    g = build_grid(2, (32, 64))
    n_lat, n_lon = g.resolution
    theta = np.repeat(g.thetas, n_lon)
    phi = np.tile(g.phis, n_lat)
    f = np.sin(theta) ** 2 * np.cos(2 * phi)
    d = sphere_derivatives(g, f)
    d_t_exact = 2 * np.sin(theta) * np.cos(theta) * np.cos(2 * phi)
    d_pp_exact = -4 * f
    assert np.max(np.abs(d["t"].ravel() - d_t_exact)) < 1e-6
    assert np.max(np.abs(d["pp"].ravel() - d_pp_exact)) < 1e-5


def test_polar_filter_identity_on_smooth_fields():
    g = build_grid(2, (16, 32))
    const = np.ones(g.n_nodes)
    assert np.max(np.abs(polar_filter(g, const) - const)) < 1e-14
    zonal = g.nodes[:, 2] ** 2
    assert np.max(np.abs(polar_filter(g, zonal) - zonal)) < 1e-14
    # mode-1 content resolvable away from the pole rows survives there
    m1 = g.nodes[:, 0]
    filtered = polar_filter(g, m1).reshape(16, 32)
    mid = slice(4, 12)
    assert np.max(np.abs(filtered[mid] - m1.reshape(16, 32)[mid])) < 1e-14


def test_polar_filter_idempotent_and_even_preserving():
    g = build_grid(2, (16, 32))
    rng = np.random.default_rng(3)
    v = rng.standard_normal(g.n_nodes)
    once = polar_filter(g, v)
    twice = polar_filter(g, once)
    assert np.max(np.abs(once - twice)) < 1e-12
    even = 0.5 * (v + v[g.antipode])
    filtered = polar_filter(g, even)
    assert np.max(np.abs(filtered - filtered[g.antipode])) < 1e-12
