"""Coupled cell-centered FV / interior-penalty DG solver for steady
convection-diffusion, with bound-driven adaptive FV/DG partitioning."""

from .adapt import (AdaptiveConfig, AdaptiveReport, AdmissibleInterval,
                    eta_bp_cell, eta_bp_node, jump_indicator, partition_step,
                    run_adaptive)
from .assembly import (DGParams, SparseSystem, assemble_system,
                       harmonic_face_diffusivity, upwind_trace)
from .basis import DGBasis
from .geometry import (AdmissibilityReport, Domain, Facet, FacetKind, Mesh,
                       Partition, build_mesh, check_tpfa_admissible,
                       classify_facets, load_mesh, refine_sites, save_mesh,
                       structured_quad_mesh, tag_boundary, vertex_neighborhood)
from .limiter import (LimiterFactors, VertexBounds, compute_vertex_bounds,
                      limit_cell, limit_solution)
from .linalg import solve_direct, solve_iterative
from .metrics import LineProfile, OscReport, line_profile, osc_metric
from .problem import (BENCHMARKS, ProblemSpec, evaluate_coefficients,
                      load_problem, make_benchmark, parse_expression)
from .solution import (DiscreteSolution, DofMap, build_dofmap,
                       evaluate_solution, project_function,
                       solution_cell_average)
from .voronoi import generate_voronoi_mesh, lloyd_relax

__version__ = "0.1.0"
