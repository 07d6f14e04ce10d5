"""Least-squares FEM for singularly perturbed Darcy (Brinkman) flow.

Pseudostress-velocity discretization with P1 velocities and row-wise RT0
tensors (optionally augmented by deviatoric-free fields), adaptive
newest-vertex bisection driven by the built-in estimator, and an
experiment harness producing plot-ready convergence records.
"""

from .adapt import (
    AdaptRecord,
    Indicators,
    adaptive_loop,
    adaptive_steps,
    compute_errors,
    dorfler_mark,
    estimate,
)
from .analysis import (
    FieldSample,
    best_approximation_probe,
    interpolate_rt,
    project_l2_piecewise_constant,
    recover_pressure,
    stress_trace_mean,
)
from .assembly import (
    ExactFields,
    LsqProblem,
    QuadratureRule,
    SparseSystem,
    assemble,
    dirichlet_lift,
    element_fields,
    eval_functional,
    quadrature_rule,
)
from .cli import RunConfig, dump_solution, fit_rate, load_solution, run
from .mesh import (
    TriangleMesh,
    geometry,
    make_lshape_mesh,
    make_unit_square_mesh,
    read_mesh,
    refine_nvb,
    uniform_refine,
    write_mesh,
)
from .problems import (
    EXPERIMENTS,
    ExperimentSpec,
    problem_lshape,
    problem_poiseuille_layer,
    problem_polynomial_pressure,
)
from .solver import SolveReport, dense_solve, matvec_rank1, pcg
from .spaces import (
    Coefficients,
    DofLayout,
    Space,
    build_space,
    embed_identity,
    eval_pseudostress_basis,
    eval_velocity_basis,
)

__version__ = "0.1.0"
