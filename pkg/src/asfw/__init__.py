"""Abs-smooth Frank-Wolfe toolkit.

Objectives are traced into a :class:`~asfw.abstape.Tape` whose only
non-smooth operation is the absolute value. Around any point the tape yields
a piecewise linear model (:mod:`asfw.plmodel`) that is minimized over a
polytope by an active signature method (:mod:`asfw.aasm`) built on a dense
simplex solver (:mod:`asfw.lp`). :mod:`asfw.solver` runs the outer
Frank-Wolfe loops and logs duality gap certificates.
"""

from .aasm import Polytope, PLSolveResult, minimize_pl
from .abstape import Tape, TapeError, abs_linearize, evaluate, subgradient, trace
from .lp import KERNEL, LPProblem, LPSolution, solve_lp
from .plmodel import AbsLinearForm, delta, eval_pl
from .problems import Problem, make_cb3i, make_lasso, make_maxq, make_mifflin2, make_problem, make_wong2
from .solver import SolveConfig, Trace, estimate_curvature, run_asfw, run_hb_asfw, run_subgradient_fw, solve

__version__ = "0.1.0"

__all__ = [
    "Tape",
    "TapeError",
    "trace",
    "evaluate",
    "abs_linearize",
    "subgradient",
    "AbsLinearForm",
    "delta",
    "eval_pl",
    "LPProblem",
    "LPSolution",
    "solve_lp",
    "KERNEL",
    "Polytope",
    "PLSolveResult",
    "minimize_pl",
    "SolveConfig",
    "Trace",
    "estimate_curvature",
    "run_asfw",
    "run_hb_asfw",
    "run_subgradient_fw",
    "solve",
    "Problem",
    "make_maxq",
    "make_wong2",
    "make_cb3i",
    "make_mifflin2",
    "make_lasso",
    "make_problem",
]
