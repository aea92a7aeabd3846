"""Multiderivative Runge-Kutta methods with relaxation for entropy conservation and dissipation."""
from .core import Dual, DerivativeChain, EntropyFunctional, chain_from_f
from .exceptions import (
    DegenerateDirection,
    DualDepthError,
    EvaluationError,
    GmresStagnation,
    MdrkError,
    NewtonConvergenceError,
    RelaxationFailure,
    StepFailure,
    UnsupportedOperation,
)
from .integrate import Trajectory, integrate
from .problems import ProblemInstance, get_problem
from .relaxation import RelaxationConfig, relax_step
from .stepping import ImplicitSolveConfig, step
from .tableaux import MdrkTableau, available, generate_hb, registry_get

__version__ = "0.1.0"

__all__ = [
    "DegenerateDirection",
    "DerivativeChain",
    "Dual",
    "DualDepthError",
    "EntropyFunctional",
    "EvaluationError",
    "GmresStagnation",
    "ImplicitSolveConfig",
    "MdrkError",
    "MdrkTableau",
    "NewtonConvergenceError",
    "ProblemInstance",
    "RelaxationConfig",
    "RelaxationFailure",
    "StepFailure",
    "Trajectory",
    "UnsupportedOperation",
    "available",
    "chain_from_f",
    "generate_hb",
    "get_problem",
    "integrate",
    "registry_get",
    "relax_step",
    "step",
]
