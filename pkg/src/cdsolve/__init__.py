"""Randomized block coordinate descent for structured convex problems.

Problems combine a quadratic, weighted smooth terms over rows of a data
matrix, separable prox-friendly terms over coordinate blocks and
nonseparable prox-friendly terms over rows of a coupling matrix.  Two
loops are provided: a primal dual coordinate descent method and an
accelerated variant with adaptive smoothing and restarts.
"""

from .atoms import CATALOG, Atom, CapabilityError, SolverError, get_atom
from .model import (
    Blocks,
    DualDuplicationIndex,
    Problem,
    SparseColMatrix,
    ValidationError,
    build_problem,
)
from .pdcd import (
    NonFiniteError,
    Result,
    SolverOptions,
    StepSizes,
    compute_step_sizes,
    run,
)
from .state import SolverState
from .accel import run_accel
from .screening import ScreeningContext
from .diagnostics import (
    Trace,
    infeasibility,
    primal_objective,
    smoothed_gap,
)

__version__ = "0.1.0"

__all__ = [
    "Atom",
    "Blocks",
    "CATALOG",
    "CapabilityError",
    "DualDuplicationIndex",
    "NonFiniteError",
    "Problem",
    "Result",
    "ScreeningContext",
    "SolverError",
    "SolverOptions",
    "SolverState",
    "SparseColMatrix",
    "StepSizes",
    "Trace",
    "ValidationError",
    "build_problem",
    "compute_step_sizes",
    "get_atom",
    "infeasibility",
    "primal_objective",
    "run",
    "run_accel",
    "smoothed_gap",
    "__version__",
]
