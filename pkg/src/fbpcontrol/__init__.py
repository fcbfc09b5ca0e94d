"""Finite element optimal control of a free boundary problem with surface tension.

The state is a pair (G, Y): a free-boundary profile G on the top edge of the
unit square and a bulk field Y on the square itself. The geometry enters the
bulk operator through the coefficient matrix A[G] obtained by mapping the
physical domain back to the reference square.
"""

from fbpcontrol.mesh import BulkMesh, TraceMesh, build_bulk_mesh, build_trace_mesh, prolong
from fbpcontrol.geometry import DegenerateGeometryError, eval_A, eval_DA
from fbpcontrol.linsolve import Factorization, SingularMatrixError, factorize
from fbpcontrol.state import (
    ConvergenceError,
    Discretization,
    StatePair,
    jacobian,
    residual,
    solve_newton,
    solve_picard,
)
from fbpcontrol.adjoint import AdjointPair, adjoint_rhs, solve_adjoint
from fbpcontrol.control import (
    ControlConfig,
    ProblemData,
    check_variational_inequality,
    hessian_min_eig,
    optimize,
    project_ball,
    reduced_cost,
    reduced_gradient,
)
from fbpcontrol.norms import RateTable, error_vs_reference, norm_bulk, norm_trace
from fbpcontrol.experiments import ExperimentSpec, builtin_gamma_d, example_spec, problem_data, run_experiment

__version__ = "0.1.0"

__all__ = [
    "AdjointPair",
    "BulkMesh",
    "ControlConfig",
    "ConvergenceError",
    "DegenerateGeometryError",
    "Discretization",
    "ExperimentSpec",
    "Factorization",
    "ProblemData",
    "RateTable",
    "SingularMatrixError",
    "StatePair",
    "TraceMesh",
    "adjoint_rhs",
    "build_bulk_mesh",
    "build_trace_mesh",
    "builtin_gamma_d",
    "check_variational_inequality",
    "error_vs_reference",
    "eval_A",
    "eval_DA",
    "example_spec",
    "factorize",
    "hessian_min_eig",
    "jacobian",
    "norm_bulk",
    "norm_trace",
    "optimize",
    "problem_data",
    "project_ball",
    "prolong",
    "reduced_cost",
    "reduced_gradient",
    "residual",
    "run_experiment",
    "solve_adjoint",
    "solve_newton",
    "solve_picard",
]
