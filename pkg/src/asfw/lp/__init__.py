"""Linear programming backend for the piecewise linear subproblems."""

from .core import KERNEL, LPError, LPProblem, LPSolution, SimplexState, solve_lp, solve_state

__all__ = ["KERNEL", "LPError", "LPProblem", "LPSolution", "SimplexState", "solve_lp", "solve_state"]
