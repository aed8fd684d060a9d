"""Raviart-Thomas mixed and finite volume discretizations of the Poisson problem on triangles."""

from .geometry import TriGeom, mesh_size, quality_theta, tri_geom
from .harness import ConvergenceReport, convergence_study, error_norms, estimate_infsup, mms_case
from .mesh import EdgeNeighborhood, Mesh, build_structured, edge_neighborhood, load_mesh, save_mesh, validate
from .solvers import (
    DiscreteSolution,
    SaddleSystem,
    assemble_mixed,
    conservation_check,
    recover_momentum,
    solve_petrov_galerkin,
    solve_saddle,
    solve_tpfa,
)
from .stencil import (
    MIN_NORM,
    Closure,
    ConstraintSystem,
    StencilCoefficients,
    assemble_constraints,
    gradient_six_point,
    solve_stencil,
)

__version__ = "0.1.0"
