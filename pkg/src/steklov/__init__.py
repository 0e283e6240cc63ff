"""Steklov and boundary Laplace-Beltrami spectra on convex domains, with bound and identity audits."""

__version__ = "0.1.0"

from .errors import SteklovError  # noqa: E402
from .shapes import Ball, Ellipsoid, RotSymProfile, min_principal_curvature, parse_shape  # noqa: E402
from .mesh import SimplicialMesh, generate, refine  # noqa: E402
from .spectra import boundary_spectrum, steklov_spectrum  # noqa: E402

__all__ = [
    "Ball", "Ellipsoid", "RotSymProfile", "SimplicialMesh", "SteklovError",
    "boundary_spectrum", "generate", "min_principal_curvature", "parse_shape",
    "refine", "steklov_spectrum",
]
