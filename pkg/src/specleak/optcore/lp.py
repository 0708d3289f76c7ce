"""Linear-programming oracle backed by the HiGHS dual simplex shipped with SciPy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog


class LpError(RuntimeError):
    pass


class LpInfeasible(LpError):
    pass


class LpUnbounded(LpError):
    pass


@dataclass
class LpResult:
    x: np.ndarray
    value: float
    iterations: int


def solve_lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, lb=None, ub=None, maximize=True) -> LpResult:
    """Optimize ``c @ x`` over ``A_ub x <= b_ub, A_eq x = b_eq, lb <= x <= ub``.

    Returns a basic optimal solution. ``lb`` defaults to 0 and ``ub`` to
    +inf. Infeasible and unbounded problems raise; any other solver failure
    raises :class:`LpError` with the solver message.
    """
    c = np.asarray(c, float)
    n = c.size
    lb = np.zeros(n) if lb is None else np.asarray(lb, float)
    ub = np.full(n, np.inf) if ub is None else np.asarray(ub, float)
    bounds = np.column_stack([np.where(np.isfinite(lb), lb, -np.inf), ub])
    if A_ub is not None and A_ub.shape[0] == 0:
        A_ub = b_ub = None
    if A_eq is not None and A_eq.shape[0] == 0:
        A_eq = b_eq = None
    res = linprog(-c if maximize else c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=bounds, method="highs-ds",
                  options={"primal_feasibility_tolerance": 1e-9, "dual_feasibility_tolerance": 1e-9})
    if res.status == 2:
        raise LpInfeasible(res.message)
    if res.status == 3:
        raise LpUnbounded(res.message)
    if res.status != 0:
        raise LpError(f"LP solver failed (status {res.status}): {res.message}")
    value = float(c @ res.x)
    return LpResult(res.x, value, int(getattr(res, "nit", 0)))
