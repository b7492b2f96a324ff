"""Modelling layer for the cdsolve solver.

Exposes a ``Problem`` class holding a validated problem description and
a ``coordinate_descent`` entry point running the core solver.  All
numerics live in cdsolve; this package only forwards arguments and
results.
"""

import cdsolve

__version__ = "0.1.0"

__all__ = ["Problem", "coordinate_descent", "__version__"]


class Problem:
    """A validated problem description.

    Accepts the keyword arguments of ``cdsolve.build_problem``: ``N``
    (required), ``blocks``, ``x_init``, ``y_init``, atom name lists
    ``f``/``g``/``h``, weights ``cf``/``cg``/``ch``, matrices
    ``Af``/``Ah``/``Q``, offsets ``bf``/``bg``/``bh``, the per block
    scaling ``Dg`` and the row block maps ``blocks_f``/``blocks_h``.
    Dense matrices are converted to sparse column storage by the core,
    and validation errors propagate unchanged.

    After a solve the primal solution is available as ``sol`` and the
    averaged dual estimate as ``dual_sol``.
    """

    def __init__(self, **kwargs):
        self.core = cdsolve.build_problem(**kwargs)
        self.sol = None
        self.dual_sol = None
        self._solving = False

    def describe(self):
        """Structural counts of the validated problem."""
        return self.core.describe()


def coordinate_descent(problem, **options):
    """Solve the problem and return the core result record.

    Options are the ``cdsolve.SolverOptions`` fields (``algo``, ``tol``,
    ``max_epochs``, ``sampling``, ``seed``, ``screening``, ...) with the
    core defaults: plain loop, uniform sampling, seed 0.  The result
    carries the solution ``x``, the dual estimate ``y`` and the
    convergence ``trace``; ``x`` and ``y`` are also stored on the handle
    as ``sol`` and ``dual_sol``.  A solve holds the interpreter; one
    solve per handle at a time.
    """
    if not isinstance(problem, Problem):
        raise TypeError("coordinate_descent expects a Problem")
    if problem._solving:
        raise RuntimeError("this Problem is already being solved")
    problem._solving = True
    try:
        res = cdsolve.run(problem.core, **options)
    finally:
        problem._solving = False
    problem.sol = res.x
    problem.dual_sol = res.y
    return res
