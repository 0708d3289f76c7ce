from .backend import BackendError, ExternalBackend, load_witness, verify_witness
from .concave import GapResult, Subproblem, SubproblemInfeasible, maximize_concave_entropy_gap
from .lp import LpError, LpInfeasible, LpResult, LpUnbounded, solve_lp
from .program import (BinaryGroup, SynthesisProgram, VarBlock, entropy_bits, entropy_gap, entropy_gap_grad, f1,
                      f2)
from .search import (BisectionResult, BisectionState, FeasibilityResult, FeasibilitySearch, InfeasibleSpecification,
                     SearchSettings, SolverInconclusive, bisect, check_feasible, group_violation,
                     max_bisection_iterations)

__all__ = [
    "BackendError", "ExternalBackend", "load_witness", "verify_witness",
    "BinaryGroup", "BisectionResult", "BisectionState", "FeasibilityResult", "FeasibilitySearch", "GapResult",
    "InfeasibleSpecification", "LpError", "LpInfeasible", "LpResult", "LpUnbounded", "SearchSettings",
    "SolverInconclusive", "Subproblem", "SubproblemInfeasible", "SynthesisProgram", "VarBlock", "bisect",
    "check_feasible", "entropy_bits", "entropy_gap", "entropy_gap_grad", "f1", "f2", "group_violation",
    "max_bisection_iterations", "maximize_concave_entropy_gap", "solve_lp",
]
