"""Ramified domains with fractal boundary: geometry, Hausdorff bounds and FEM."""

__version__ = "0.1.0"

from .errors import RamifiedError  # noqa: E402
from .geometry import build_prefractal, solve_tau_star  # noqa: E402
from .hausdorff import compute_a_n, compute_b_n, hausdorff_dimension, sandwich_report  # noqa: E402
from .mesh import boundary_measure_weights, triangulate  # noqa: E402
from .fem import CoefficientSet, assemble, coercivity_certificate  # noqa: E402
from .solvers import solve_elliptic, solve_parabolic  # noqa: E402

__all__ = [
    "RamifiedError",
    "build_prefractal",
    "solve_tau_star",
    "compute_a_n",
    "compute_b_n",
    "hausdorff_dimension",
    "sandwich_report",
    "boundary_measure_weights",
    "triangulate",
    "CoefficientSet",
    "assemble",
    "coercivity_certificate",
    "solve_elliptic",
    "solve_parabolic",
]
