"""Maximization of ``f1(nu) - theta * f2(nu)`` over a polytope with fixed binaries.

The objective depends on the LP variables only through the handful of entropy
terms, so the routine runs a fully corrective conditional-gradient scheme: an
LP oracle supplies vertices, and the objective is maximized exactly over the
convex hull of the vertices collected so far. Vertices are kept on the
:class:`Subproblem`, so later calls at other levels ``theta`` start from them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .lp import LpInfeasible, solve_lp
from .program import SynthesisProgram, entropy_gap, entropy_gap_grad


class SubproblemInfeasible(RuntimeError):
    pass


class Subproblem:
    """The polytope obtained from a program by fixing some binaries."""

    def __init__(self, program: SynthesisProgram, assignment: dict):
        self.program = program
        self.assignment = dict(assignment)
        self.lb, self.ub = program.bounds_with(assignment)
        self.vertices: list[np.ndarray] = []
        self.nus: list[np.ndarray] = []
        self.infeasible = False
        self.weights: Optional[np.ndarray] = None
        self.lp_calls = 0

    def oracle(self, direction: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vertex maximizing ``direction @ nu``."""
        if self.infeasible:
            raise SubproblemInfeasible("polytope is empty")
        prog = self.program
        A_eq, b_eq, A_ub, b_ub = prog.compiled()
        c = np.zeros(prog.n_vars)
        np.add.at(c, prog.entropy_terms, direction)
        self.lp_calls += 1
        try:
            res = solve_lp(c, A_ub, b_ub, A_eq, b_eq, self.lb, self.ub, maximize=True)
        except LpInfeasible as exc:
            self.infeasible = True
            raise SubproblemInfeasible(str(exc)) from exc
        z = res.x
        fixed = self.lb == self.ub
        z[fixed] = self.lb[fixed]
        return z, prog.nu(z)

    def linear(self, c: np.ndarray) -> np.ndarray:
        """Point maximizing ``c @ z`` over the polytope; not recorded as a vertex."""
        if self.infeasible:
            raise SubproblemInfeasible("polytope is empty")
        A_eq, b_eq, A_ub, b_ub = self.program.compiled()
        self.lp_calls += 1
        try:
            res = solve_lp(c, A_ub, b_ub, A_eq, b_eq, self.lb, self.ub, maximize=True)
        except LpInfeasible as exc:
            self.infeasible = True
            raise SubproblemInfeasible(str(exc)) from exc
        return res.x

    def add_vertex(self, z, nu) -> bool:
        for other in self.nus:
            if np.max(np.abs(other - nu)) <= 1e-11:
                return False
        self.vertices.append(z)
        self.nus.append(nu)
        if self.weights is not None:
            self.weights = np.append(self.weights, 0.0)
        return True


@dataclass
class GapResult:
    point: np.ndarray
    nu: np.ndarray
    value: float
    upper: float
    iterations: int
    status: str
    lp_calls: int = 0
    history: list = field(default_factory=list)


def _inner(nus: np.ndarray, theta: float, w0: np.ndarray) -> np.ndarray:
    """Maximize the gap over convex weights on the collected vertices."""
    k = nus.shape[0]
    if k == 1:
        return np.ones(1)

    def neg(w):
        return -entropy_gap(w @ nus, theta)

    def neg_grad(w):
        return -(nus @ entropy_gap_grad(w @ nus, theta))

    w0 = np.clip(w0, 0, None)
    w0 = w0 / w0.sum() if w0.sum() > 0 else np.full(k, 1.0 / k)
    res = minimize(neg, w0, jac=neg_grad, method="SLSQP", bounds=[(0.0, 1.0)] * k,
                   constraints=[{"type": "eq", "fun": lambda w: w.sum() - 1.0, "jac": lambda w: np.ones(k)}],
                   options={"ftol": 1e-15, "maxiter": 500})
    w = np.clip(res.x, 0, None)
    w = w / w.sum()
    # keep whichever of the start and the solver output is better
    return w if neg(w) <= neg(w0) else w0


def maximize_concave_entropy_gap(sub: Subproblem, theta: float, *, conv_tol: float = 1e-6,
                                 max_iter: int = 5000, target: Optional[float] = None) -> GapResult:
    """Maximize ``g = f1 - theta * f2`` over the subproblem's polytope.

    Returns the best point with a certified upper bound ``upper`` on the
    supremum. With ``target`` set, stops as soon as the value reaches it or the
    bound falls below it.
    """
    if not sub.nus:
        z, nu = sub.oracle(np.ones(sub.program.entropy_terms.size))
        sub.add_vertex(z, nu)
        sub.weights = np.ones(1)
    status = "budget"
    history = []
    value, upper = -np.inf, np.inf
    it = 0
    w = sub.weights
    for it in range(1, max_iter + 1):
        nus = np.array(sub.nus)
        start = sub.weights if sub.weights is not None else np.full(len(nus), 1 / len(nus))
        w = _inner(nus, theta, start)
        sub.weights = w
        nu = w @ nus
        value = entropy_gap(nu, theta)
        grad = entropy_gap_grad(nu, theta)
        if target is not None and value >= target:
            status = "target"
            break
        z_new, nu_new = sub.oracle(grad)
        gap = float(grad @ (nu_new - nu))
        upper = min(upper, value + max(gap, 0.0))
        history.append((value, upper))
        if gap <= conv_tol:
            status = "converged"
            break
        if target is not None and upper < target:
            status = "below"
            break
        if not sub.add_vertex(z_new, nu_new):
            # the inner solve missed the optimum over the current hull; nudge it
            nus = np.array(sub.nus)
            w2 = _inner(nus, theta, np.full(len(nus), 1 / len(nus)))
            if entropy_gap(w2 @ nus, theta) <= value + 1e-12:
                status = "stalled"
                break
            sub.weights = w2
    point = np.asarray(w) @ np.array(sub.vertices)
    return GapResult(point, sub.program.nu(point), float(value), float(upper), it, status, sub.lp_calls, history)
