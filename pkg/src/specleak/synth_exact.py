"""Exact synthesis on the product of the expanded MDP with every specification automaton."""

from __future__ import annotations

import logging
import math
import time
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse

from .automata import ProductMdp, product, spec_automaton
from .model import Mdp, expand
from .optcore import (BinaryGroup, FeasibilitySearch, SearchSettings, SynthesisProgram, VarBlock, bisect,
                      entropy_bits)
from .policy import SynthesisResult, extract_policy
from .speclang import ProblemInstance

log = logging.getLogger(__name__)

# margin below beta for non-candidates, so that x(i) = 0 really means "not a candidate"
CANDIDACY_MARGIN = 1e-5


@dataclass
class OccupancyLayout:
    """Maps the action-major lambda block back to a (states x actions) table."""

    block: VarBlock
    states: np.ndarray  # product (or expanded) indices that carry lambda columns
    n_states: int
    n_actions: int

    def column(self, pos: int, a: int) -> int:
        return self.block.start + a * len(self.states) + pos

    def table(self, z) -> np.ndarray:
        m = len(self.states)
        vals = np.asarray(z)[self.block.start:self.block.start + self.block.size].reshape(self.n_actions, m).T
        out = np.zeros((self.n_states, self.n_actions))
        out[self.states] = vals
        return out

    def visits(self, rows: np.ndarray) -> sparse.csr_matrix:
        """Row vectors summing lambda over all actions of the given positions."""
        m = len(self.states)
        cols = np.concatenate([self.block.start + a * m + rows for a in range(self.n_actions)])
        r = np.tile(np.arange(len(rows)), self.n_actions)
        return sparse.csr_matrix((np.ones(len(cols)), (r, cols)), shape=(len(rows), self.block.start + self.block.size))


def add_flow_block(program: SynthesisProgram, matrices, active: np.ndarray, alpha: np.ndarray,
                   n_states: int) -> OccupancyLayout:
    """Occupancy variables on ``active`` states with one conservation row each."""
    m, A = len(active), len(matrices)
    lam = program.add_block("lambda", m * A, lb=0.0)
    eye = sparse.identity(m, format="csr")
    parts = []
    for P in matrices:
        sub = P[active][:, active]
        parts.append(eye - sub.T)
    flow = sparse.hstack(parts).tocsr()
    full = sparse.hstack([sparse.csr_matrix((m, lam.start)), flow]).tocsr()
    program.add_rows(full, "==", alpha[active], tag="flow")
    return OccupancyLayout(lam, active, n_states, A)


def add_candidacy_rows(program: SynthesisProgram, mu: VarBlock, instance: ProblemInstance) -> tuple[VarBlock, VarBlock]:
    """Ground-truth threshold, candidacy binaries and the McCormick form of nu = mu * x."""
    N = instance.n_specs
    nu = program.add_block("nu", N, lb=0.0, ub=1.0)
    x = program.add_block("x", N, kind="binary")
    program.add_row([mu[instance.ground_truth]], [1.0], ">=", instance.gamma, "ground_truth")
    program.fix(x[instance.ground_truth], 1.0)
    beta, margin = instance.beta, CANDIDACY_MARGIN
    for i in range(N):
        program.add_row([mu[i], x[i]], [1.0, -beta], ">=", 0.0, f"beta[{i}]")
        program.add_row([mu[i], x[i]], [1.0, -(1.0 - beta + margin)], "<=", beta - margin, f"noncandidate[{i}]")
        program.add_row([nu[i], x[i]], [1.0, -1.0], "<=", 0.0, f"mccormick[{i}]")
        program.add_row([nu[i], mu[i]], [1.0, -1.0], "<=", 0.0, f"mccormick[{i}]")
        program.add_row([nu[i], x[i], mu[i]], [1.0, -1.0, -1.0], ">=", -1.0, f"mccormick[{i}]")
        program.add_group(BinaryGroup("candidate", (x[i],), spec=i, label=f"x[{i}]"))
    program.set_entropy_terms(nu.indices)
    return nu, x


def _check_transient(prod: ProductMdp, active: np.ndarray):
    """Occupancy measures are finite only if the non-absorbing part is acyclic."""
    mask = np.zeros(prod.n_states, dtype=bool)
    mask[active] = True
    adj = sum(prod.matrices).tocsr()
    adj = adj[active][:, active]
    indeg = np.asarray((adj > 0).sum(axis=0)).ravel()
    queue = deque(np.flatnonzero(indeg == 0))
    seen = 0
    adj = (adj > 0).tocsr()
    while queue:
        j = queue.popleft()
        seen += 1
        for k in adj.indices[adj.indptr[j]:adj.indptr[j + 1]]:
            indeg[k] -= 1
            if indeg[k] == 0:
                queue.append(k)
    if seen != len(active):
        raise ValueError("product has a cycle outside the absorbing set; the horizon is too short")


def assemble_exact_program(prod: ProductMdp, instance: ProblemInstance) -> tuple[SynthesisProgram, OccupancyLayout]:
    if prod.n_specs != instance.n_specs:
        raise ValueError(f"product tracks {prod.n_specs} automata but the instance has {instance.n_specs} specs")
    active = np.flatnonzero(~prod.absorbing)
    _check_transient(prod, active)
    program = SynthesisProgram()
    layout = add_flow_block(program, prod.matrices, active, prod.alpha, prod.n_states)
    program.alpha = prod.alpha
    mu = program.add_block("mu", instance.n_specs, lb=0.0, ub=1.0)
    pos = {int(j): p for p, j in enumerate(active)}
    for i in range(instance.n_specs):
        acc = np.flatnonzero(prod.accepting[i])
        if prod.absorbing[acc].any():
            raise ValueError("accepting product states must lie outside the absorbing set")
        rows = np.array([pos[int(j)] for j in acc], dtype=int)
        vis = layout.visits(rows) if rows.size else sparse.csr_matrix((0, program.n_vars))
        coef = sparse.csr_matrix(vis.sum(axis=0)) if rows.size else sparse.csr_matrix((1, program.n_vars))
        row = sparse.hstack([-coef, sparse.csr_matrix((1, program.n_vars - coef.shape[1]))]).tocsr()
        row = row + sparse.csr_matrix(([1.0], ([0], [mu[i]])), shape=(1, program.n_vars))
        program.add_rows(row, "==", [0.0], tag=f"reach[{i}]")
    add_candidacy_rows(program, mu, instance)
    return program, layout


def build_product(mdp: Mdp, instance: ProblemInstance) -> ProductMdp:
    """Product with stage horizon one past the longest formula, so every position is distinguishable."""
    expanded = expand(mdp, instance.horizon + 1)
    return product(expanded, [spec_automaton(s) for s in instance.specs])


def run_bisection(program, instance, epsilon, settings, backend=None):
    """Bisection on the entropy level between 0 and log2 N.

    ``backend`` optionally maps the program to a feasibility oracle with a
    ``check(theta)`` method; the built-in search is used otherwise.
    """
    search = backend(program) if backend is not None else FeasibilitySearch(program, settings)
    upper = math.log2(instance.n_specs)
    res = bisect(program, 0.0, upper, epsilon, search=search)
    return res, search


def synthesize_exact(mdp: Mdp, instance: ProblemInstance, epsilon: float = 1e-4,
                     settings: Optional[SearchSettings] = None, backend=None) -> SynthesisResult:
    t0 = time.perf_counter()
    prod = build_product(mdp, instance)
    t_prod = time.perf_counter()
    program, layout = assemble_exact_program(prod, instance)
    log.info("exact program: %d product states, %s", prod.n_states, program.counts())
    bis, search = run_bisection(program, instance, epsilon, settings, backend)
    z = bis.witness.point
    occ = layout.table(z)
    policy = extract_policy(occ, prod)
    mu = z[program.blocks["mu"].indices]
    nu = z[program.blocks["nu"].indices]
    x = np.round(z[program.blocks["x"].indices])
    stats = {
        "product_states": prod.n_states,
        "bisection_iterations": bis.iterations,
        "theta_bracket": [bis.lower, bis.upper],
        "history": bis.history,
        "product_time": t_prod - t0,
        "wall_time": time.perf_counter() - t0,
        **program.counts(),
        **search.stats,
    }
    return SynthesisResult("exact", policy, list(instance.specs), instance.ground_truth, instance.beta,
                           mu, nu, x, entropy_bits(nu), bis.theta, occ, program, z, stats)
