"""Curvature-flow solvers for Minkowski-type problems on support-function grids."""

from .errors import (
    CollapseError,
    ConfigError,
    ConvexityError,
    GridError,
    InvariantViolationError,
    MeasureError,
    MinkflowError,
    QuadratureError,
    SpecError,
)
from .geometry import (
    RadiiField,
    SupportField,
    barycenter_of_surface_measure,
    boundary_points,
    constant_field,
    curvature_F,
    ellipsoid_field,
    export_mesh,
    hausdorff_distance,
    is_strictly_convex,
    linear_field,
    min_radii_eigenvalue,
    perturbed_sphere_field,
    radii_matrix,
    segment_field,
    sigma_k,
    sigma_n,
    volume,
    widths,
)
from .grids import SphereGrid, build_grid

__all__ = [name for name in dir() if not name.startswith("_")]
