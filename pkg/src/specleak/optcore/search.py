"""Feasibility of ``f1(nu) >= theta * f2(nu)`` over binary assignments, and bisection on theta."""

from __future__ import annotations

import itertools
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .concave import Subproblem, SubproblemInfeasible, maximize_concave_entropy_gap
from .program import BinaryGroup, SynthesisProgram, entropy_bits, entropy_gap_grad

log = logging.getLogger(__name__)


class InfeasibleSpecification(RuntimeError):
    """No policy meets the constraints even at entropy level 0."""


class SolverInconclusive(RuntimeError):
    pass


@dataclass
class SearchSettings:
    feas_tol: float = 1e-6
    conv_tol: float = 1e-6
    max_iter: int = 5000
    exhaustive_limit: int = 20
    max_rounds: int = 25
    pump_rounds: int = 60
    threads: int = 1


@dataclass
class FeasibilityResult:
    feasible: bool
    theta: float
    point: Optional[np.ndarray] = None
    value: float = -np.inf
    upper: float = np.inf
    assignment: dict = field(default_factory=dict)
    certified: bool = True
    inconclusive: bool = False
    diagnostics: dict = field(default_factory=dict)

    @property
    def entropy(self) -> float:
        return float("nan") if self.point is None else self.diagnostics.get("entropy", float("nan"))


def _expr_value(expr, z) -> float:
    idx, coefs, const = expr
    return float(np.dot(np.asarray(coefs), z[list(idx)]) + const)


def reset_group(group: BinaryGroup, z) -> tuple:
    """Binary values that make ``group`` consistent with the continuous part of ``z``."""
    if group.kind == "select":
        best = int(np.argmax(z[list(group.values)]))
        return tuple(1.0 if j == best else 0.0 for j in range(len(group.variables)))
    if group.kind == "clamp":
        return (1.0 if _expr_value(group.expr, z) > 0 else 0.0,)
    return tuple(float(round(z[v])) for v in group.variables)


def group_violation(group: BinaryGroup, z) -> float:
    """How far ``z`` is from the exact max / clamp relation encoded by ``group``."""
    if group.kind == "select":
        vals = z[list(group.values)]
        chosen = float(np.dot(z[list(group.variables)], vals))
        return float(vals.max() - chosen)
    if group.kind == "clamp":
        e = _expr_value(group.expr, z)
        y = z[group.variables[0]]
        return max(0.0, -e) if y > 0.5 else max(0.0, e)
    return 0.0


def _group_options(group: BinaryGroup):
    if group.kind == "select":
        n = len(group.variables)
        return [tuple(1.0 if j == k else 0.0 for j in range(n)) for k in range(n)]
    return [tuple(map(float, bits)) for bits in itertools.product((0, 1), repeat=len(group.variables))]


class FeasibilitySearch:
    """Stateful feasibility oracle for one program; caches vertices across levels."""

    def __init__(self, program: SynthesisProgram, settings: Optional[SearchSettings] = None):
        self.program = program
        self.settings = settings or SearchSettings()
        self.subproblems: dict = {}
        self.incumbents: dict = {}
        self.stats = {"checks": 0, "subproblems": 0, "lp_calls": 0, "alternation_rounds": 0, "pump_rounds": 0, "fallbacks": 0}
        lb, ub = np.asarray(program.lb), np.asarray(program.ub)
        self._fixed = {int(i): float(lb[i]) for i in program.binary_indices if lb[i] == ub[i]}
        grouped = set()
        self.candidate_groups, self.other_groups = [], []
        for g in program.groups:
            grouped.update(g.variables)
            free = [v for v in g.variables if v not in self._fixed]
            if not free:
                continue
            (self.candidate_groups if g.kind == "candidate" else self.other_groups).append(g)
        for v in program.binary_indices:
            if int(v) not in grouped and int(v) not in self._fixed:
                self.other_groups.append(BinaryGroup("plain", (int(v),), label=f"z[{int(v)}]"))
        self.candidate_vars = [g.variables[0] for g in self.candidate_groups]
        self._fixed_candidates_on = sum(
            1 for g in program.groups if g.kind == "candidate" and self._fixed.get(g.variables[0], 0.0) == 1.0)
        self._has_candidates = any(g.kind == "candidate" for g in program.groups)

    # -- subproblem evaluation ---------------------------------------------
    def _sub(self, assignment: dict) -> Subproblem:
        key = tuple(sorted(assignment.items()))
        sub = self.subproblems.get(key)
        if sub is None:
            sub = Subproblem(self.program, assignment)
            self.subproblems[key] = sub
            self.stats["subproblems"] += 1
        return sub

    def _solve(self, assignment: dict, theta: float):
        """Returns (verdict, gap result) with verdict in feasible / infeasible / unknown."""
        s = self.settings
        sub = self._sub(assignment)
        if sub.infeasible:
            return "infeasible", None
        before = sub.lp_calls
        try:
            res = maximize_concave_entropy_gap(sub, theta, conv_tol=s.conv_tol, max_iter=s.max_iter,
                                               target=-s.feas_tol)
            if res.value < -s.feas_tol and res.upper >= -s.feas_tol and res.status in ("budget", "stalled"):
                # precision fallback: restart from the collected vertices with uniform weights
                self.stats["fallbacks"] += 1
                sub.weights = None
                res = maximize_concave_entropy_gap(sub, theta, conv_tol=s.conv_tol / 100,
                                                   max_iter=2 * s.max_iter, target=-s.feas_tol)
        except SubproblemInfeasible:
            return "infeasible", None
        finally:
            self.stats["lp_calls"] += sub.lp_calls - before
        if res.value >= -s.feas_tol:
            return "feasible", res
        if res.upper < -s.feas_tol or res.status == "converged":
            return "infeasible", res
        return "unknown", res

    # -- search over binaries ----------------------------------------------
    def _x_assignments(self, theta: float):
        k = len(self.candidate_vars)
        out = []
        for bits in itertools.product((1.0, 0.0), repeat=k):
            on = self._fixed_candidates_on + int(sum(bits))
            if self._has_candidates:
                if on == 0 or theta > math.log2(on) + 1e-12:
                    continue
            out.append(dict(zip(self.candidate_vars, bits)))
        out.sort(key=lambda a: -sum(a.values()))
        return out

    def _search_y(self, x: dict, theta: float):
        groups = self.other_groups
        n_bin = len(self.program.binary_indices)
        if not groups:
            verdict, res = self._solve(x, theta)
            return verdict, res, dict(x), verdict != "unknown"
        if n_bin <= self.settings.exhaustive_limit:
            unknown = False
            for combo in itertools.product(*(_group_options(g) for g in groups)):
                a = dict(x)
                for g, vals in zip(groups, combo):
                    a.update(zip(g.variables, vals))
                verdict, res = self._solve(a, theta)
                if verdict == "feasible":
                    return verdict, res, a, True
                unknown |= verdict == "unknown"
            return ("unknown" if unknown else "infeasible"), None, None, not unknown
        return self._alternate(x, theta)

    def _assign_from(self, x: dict, z) -> dict:
        a = dict(x)
        for g in self.other_groups:
            a.update(zip(g.variables, reset_group(g, z)))
        return a

    def _alternate(self, x: dict, theta: float):
        """Block alternation over the selector binaries for a fixed candidate assignment."""
        s = self.settings
        xkey = tuple(sorted(x.items()))
        relaxed_verdict, relaxed = self._solve(x, theta)
        if relaxed_verdict == "infeasible":
            # the continuous relaxation is a valid relaxation: certified
            return "infeasible", None, None, True
        seeds = []
        if xkey in self.incumbents:
            seeds.append(self.incumbents[xkey])
        if relaxed is not None:
            seeds.append(self._assign_from(x, relaxed.point))
        tried = set()
        for seed in seeds:
            a = seed
            for _ in range(s.max_rounds):
                key = tuple(sorted(a.items()))
                if key in tried:
                    break
                tried.add(key)
                self.stats["alternation_rounds"] += 1
                verdict, res = self._solve(a, theta)
                if verdict == "feasible":
                    a, res = self._repair(a, res, theta)
                    if res is not None:
                        self.incumbents[xkey] = a
                        return "feasible", res, a, True
                    break
                if res is None:
                    break
                a = self._assign_from(x, res.point)
        if relaxed is not None:
            found = self._pump(x, theta, relaxed.point, tried)
            if found is not None:
                return found
        return "infeasible", None, None, False

    def _round(self, x: dict, z) -> dict:
        """Nearest binary assignment to the selector values of ``z``."""
        a = dict(x)
        for g in self.other_groups:
            vals = z[list(g.variables)]
            if g.kind == "select":
                # ties broken by the selected values themselves
                score = vals + 1e-6 * z[list(g.values)]
                best = int(np.argmax(score))
                a.update((v, 1.0 if j == best else 0.0) for j, v in enumerate(g.variables))
            else:
                a.update((v, 1.0 if val > 0.5 else 0.0) for v, val in zip(g.variables, vals))
        return a

    def _pump(self, x: dict, theta: float, start, tried: set):
        """Feasibility pump on the selector binaries, biased towards a large gap.

        Each round maximizes agreement with the current rounded assignment plus
        a fading multiple of the gap's gradient over the relaxed polytope, then
        rounds again; cycles are broken by flipping random selectors.
        """
        s = self.settings
        sub = self._sub(x)
        rng = np.random.default_rng(len(tried))
        terms = self.program.entropy_terms
        n_bin = sum(len(g.variables) for g in self.other_groups)
        z = np.asarray(start, float)
        a = self._round(x, z)
        seen = set()
        for k in range(s.pump_rounds):
            key = tuple(sorted(a.items()))
            if key not in tried:
                tried.add(key)
                self.stats["pump_rounds"] += 1
                verdict, res = self._solve(a, theta)
                if verdict == "feasible":
                    a2, res2 = self._repair(a, res, theta)
                    if res2 is not None:
                        self.incumbents[tuple(sorted(x.items()))] = a2
                        return "feasible", res2, a2, True
            c = np.zeros(self.program.n_vars)
            for g in self.other_groups:
                for v in g.variables:
                    c[v] = 1.0 if a[v] > 0.5 else -1.0
            grad = entropy_gap_grad(z[terms], theta)
            scale = math.sqrt(n_bin) / max(float(np.linalg.norm(grad)), 1e-12)
            np.add.at(c, terms, 0.9 ** k * scale * grad)
            before = sub.lp_calls
            try:
                z = sub.linear(c)
            except SubproblemInfeasible:
                return None
            finally:
                self.stats["lp_calls"] += sub.lp_calls - before
            nxt = self._round(x, z) if k % 2 else self._assign_from(x, z)
            nkey = tuple(sorted(nxt.items()))
            if nkey in seen or nkey == key:
                flips = max(1, len(self.other_groups) // 10)
                for gi in rng.choice(len(self.other_groups), size=flips, replace=False):
                    g = self.other_groups[gi]
                    if g.kind == "select":
                        pick = int(rng.integers(len(g.variables)))
                        nxt.update((v, 1.0 if j == pick else 0.0) for j, v in enumerate(g.variables))
                    else:
                        nxt.update((v, 1.0 - nxt[v]) for v in g.variables)
            seen.add(nkey)
            a = nxt
        return None

    def _repair(self, a: dict, res, theta: float):
        """Check the max / clamp exactness on a witness; re-search violating blocks alone."""
        z = res.point
        for g in self.other_groups:
            if group_violation(g, z) <= 1e-6:
                continue
            self.stats["fallbacks"] += 1
            for vals in _group_options(g):
                trial = dict(a)
                trial.update(zip(g.variables, vals))
                verdict, r2 = self._solve(trial, theta)
                if verdict == "feasible" and group_violation(g, r2.point) <= 1e-6:
                    return self._repair(trial, r2, theta)
            return a, None
        return a, res

    def check(self, theta: float) -> FeasibilityResult:
        self.stats["checks"] += 1
        t0 = time.perf_counter()
        certified, unknown = True, False
        xs = self._x_assignments(theta)

        def run(x):
            return self._search_y(x, theta)

        # every candidate assignment is searched so that the state cached per
        # assignment, and hence the witness, does not depend on the thread count
        if self.settings.threads > 1 and len(xs) > 1:
            with ThreadPoolExecutor(self.settings.threads) as pool:
                outcomes = list(pool.map(run, xs))
        else:
            outcomes = [run(x) for x in xs]
        for verdict, res, a, cert in outcomes:
            if verdict == "feasible":
                diag = {"entropy": entropy_bits(res.nu), "gap_iterations": res.iterations,
                        "gap_status": res.status, "elapsed": time.perf_counter() - t0}
                full = {**self._fixed, **a}
                return FeasibilityResult(True, theta, res.point, res.value, res.upper, full, True, False, diag)
            certified &= cert
            unknown |= verdict == "unknown"
        diag = {"elapsed": time.perf_counter() - t0, "assignments": len(xs)}
        return FeasibilityResult(False, theta, certified=certified and not unknown, inconclusive=unknown,
                                 diagnostics=diag)


def check_feasible(program: SynthesisProgram, theta: float, search: Optional[FeasibilitySearch] = None,
                   settings: Optional[SearchSettings] = None) -> FeasibilityResult:
    search = search or FeasibilitySearch(program, settings)
    return search.check(theta)


@dataclass
class BisectionState:
    lower: float
    upper: float
    tol: float
    iterations: int = 0
    witness: Optional[FeasibilityResult] = None

    @property
    def theta(self) -> float:
        return 0.5 * (self.lower + self.upper)

    def done(self) -> bool:
        return self.upper - self.lower <= self.tol


@dataclass
class BisectionResult:
    theta: float
    witness: FeasibilityResult
    iterations: int
    lower: float
    upper: float
    history: list


def max_bisection_iterations(lower: float, upper: float, tol: float) -> int:
    return 0 if upper - lower <= tol else math.ceil(math.log2((upper - lower) / tol))


def bisect(program: SynthesisProgram, lower: float, upper: float, tol: float,
           search: Optional[FeasibilitySearch] = None, settings: Optional[SearchSettings] = None,
           ) -> BisectionResult:
    """Largest level theta (within ``tol``) for which the feasibility problem has a witness.

    The level ``lower`` is checked first and must be feasible.
    """
    if lower > upper:
        raise ValueError("lower bound exceeds upper bound")
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    search = search or FeasibilitySearch(program, settings)
    first = search.check(lower)
    history = [(lower, first.feasible)]
    if first.inconclusive:
        raise SolverInconclusive(f"feasibility at level {lower} could not be decided")
    if not first.feasible:
        raise InfeasibleSpecification("constraints are infeasible at the lowest entropy level")
    state = BisectionState(lower, upper, tol, witness=first)
    while not state.done():
        theta = state.theta
        res = search.check(theta)
        state.iterations += 1
        history.append((theta, res.feasible))
        log.debug("bisection %d: theta=%.6f feasible=%s", state.iterations, theta, res.feasible)
        if res.inconclusive:
            raise SolverInconclusive(f"feasibility at level {theta:.6g} could not be decided")
        if res.feasible:
            state.lower, state.witness = theta, res
        else:
            state.upper = theta
    return BisectionResult(state.lower, state.witness, state.iterations, state.lower, state.upper, history)
