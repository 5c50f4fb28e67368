"""Desk-scale exact and relaxed solvers for knapsack and GAP."""

from .common import Budget, SolveResult, Status
from .knapsack import kp_exact, kp_fractional_greedy
from .bnb import gap_exact, lagrangian_multipliers, lagrangian_bound
from .simplex import LPResult, LPSizeError, gap_lp
from .expected import expected_opt, solve_exact

__all__ = [
    "Budget",
    "SolveResult",
    "Status",
    "kp_exact",
    "kp_fractional_greedy",
    "gap_exact",
    "lagrangian_multipliers",
    "lagrangian_bound",
    "LPResult",
    "LPSizeError",
    "gap_lp",
    "expected_opt",
    "solve_exact",
]
