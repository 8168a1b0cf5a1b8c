"""Operator-splitting solvers for semilinear, Monge-Ampere and Pucci problems on P1 meshes."""
from .mesh import (
    MeshError,
    MeshParseError,
    NodeGeometry,
    Triangulation,
    compute_node_geometry,
    generate_eye_domain,
    generate_half_unit_disk,
    generate_regular_square,
    load_mesh,
    write_mesh,
)
from .fem import (
    ConvergenceError,
    DirichletSolver,
    SolverError,
    assemble_lumped_mass,
    assemble_stiffness,
    field_norms,
    l2_norm,
    smallest_laplacian_eigenvalue,
    solve_dirichlet,
)
from .hessian import (
    HessianConfig,
    HessianField,
    HessianRecovery,
    hessian_pointwise,
    recover_interior,
    repair_boundary,
    tikhonov_regularize,
)
from .problems import ProblemSpec, get_problem, problem_names, registry
from .splitting import (
    IterationLog,
    SplittingConfig,
    SplittingResult,
    contraction_diagnostic,
    initialize,
    run,
    substep_u,
    substep_w,
)
from .harness import RunReport, StudyPlan, compute_rate, cross_section, run_study

__version__ = "0.1.0"
