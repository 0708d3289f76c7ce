"""Approximate synthesis on the expanded MDP with Frechet lower bounds per specification.

Every specification's satisfaction probability is replaced by an assumption-free
lower bound built from per-position probabilities ``eta(k)``: the probability that
the literal holds at word position ``k``. Disjunctions over a window are bounded
by ``max eta`` and conjunctions by ``max(0, sum eta - (n - 1))``. Each max or
clamp is encoded exactly with binaries and McCormick envelopes.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse

from .automata import ProductMdp, product
from .model import Mdp, expand
from .optcore import BinaryGroup, SearchSettings, SynthesisProgram, entropy_bits
from .policy import SynthesisResult, extract_policy
from .speclang import ALWAYS, ALWAYS_EVENTUALLY, ATOM, EVENTUALLY, EVENTUALLY_ALWAYS, Atom, ProblemInstance, SpecFormula
from .synth_exact import OccupancyLayout, add_candidacy_rows, add_flow_block, run_bisection

log = logging.getLogger(__name__)


@dataclass
class FrechetBlock:
    """Variables and selector groups encoding one specification's lower bound."""

    spec: int
    form: str
    mu: int
    eta: dict  # word position -> column
    zeta: dict = field(default_factory=dict)  # window start -> column (nested forms)
    groups: list = field(default_factory=list)
    gammas: list = field(default_factory=list)
    windows: tuple = ()

    def _eta(self, z, lo, hi):
        return np.array([z[self.eta[k]] for k in range(lo, hi + 1)])

    def recompute(self, z) -> float:
        """The literal max / clamp expression evaluated on the eta values of ``z``."""
        z = np.asarray(z)
        if self.form == ATOM:
            return float(z[self.eta[0]])
        (a, b), *inner = self.windows
        if self.form == EVENTUALLY:
            return float(self._eta(z, a, b).max())
        if self.form == ALWAYS:
            return max(0.0, float(self._eta(z, a, b).sum()) - (b - a))
        c, d = inner[0]
        if self.form == EVENTUALLY_ALWAYS:
            return max(max(0.0, float(self._eta(z, m + c, m + d).sum()) - (d - c)) for m in range(a, b + 1))
        inner_max = [float(self._eta(z, m + c, m + d).max()) for m in range(a, b + 1)]
        return max(0.0, sum(inner_max) - (b - a))

    def recompute_zeta(self, z) -> dict:
        z = np.asarray(z)
        if self.form not in (EVENTUALLY_ALWAYS, ALWAYS_EVENTUALLY):
            return {}
        (a, b), (c, d) = self.windows
        out = {}
        for m in range(a, b + 1):
            vals = self._eta(z, m + c, m + d)
            out[m] = max(0.0, float(vals.sum()) - (d - c)) if self.form == EVENTUALLY_ALWAYS else float(vals.max())
        return out

    def violation(self, z) -> float:
        z = np.asarray(z)
        worst = abs(float(z[self.mu]) - self.recompute(z))
        for m, v in self.recompute_zeta(z).items():
            worst = max(worst, abs(float(z[self.zeta[m]]) - v))
        return worst


class _BlockBuilder:
    """Emits the max / clamp encodings into a program."""

    def __init__(self, program: SynthesisProgram):
        self.program = program
        self.counter = 0

    def _name(self, stem):
        self.counter += 1
        return f"{stem}{self.counter}"

    def mccormick(self, y: int, v: int, tag: str) -> int:
        """New column equal to ``y * v`` for binary ``y`` and ``v`` in [0, 1]."""
        g = self.program.add_block(self._name("gamma"), 1, lb=0.0, ub=1.0)[0]
        p = self.program
        p.add_row([g, y], [1.0, -1.0], "<=", 0.0, tag)
        p.add_row([g, v], [1.0, -1.0], "<=", 0.0, tag)
        p.add_row([g, v, y], [1.0, -1.0, -1.0], ">=", -1.0, tag)
        return g

    def maximum(self, out: int, values: list[int], spec: int, tag: str) -> list[int]:
        """``out = max(values)``; returns the envelope columns."""
        p = self.program
        for v in values:
            p.add_row([out, v], [1.0, -1.0], ">=", 0.0, tag)
        if len(values) == 1:
            p.add_row([out, values[0]], [1.0, -1.0], "==", 0.0, tag)
            return []
        y = p.add_block(self._name("y"), len(values), kind="binary")
        p.add_row(list(y.indices), [1.0] * len(values), "==", 1.0, tag)
        gam = [self.mccormick(int(y[k]), v, tag) for k, v in enumerate(values)]
        p.add_row([out] + gam, [1.0] + [-1.0] * len(gam), "==", 0.0, tag)
        p.add_group(BinaryGroup("select", tuple(int(i) for i in y.indices), spec=spec,
                                values=tuple(values), label=tag))
        return gam

    def clamp(self, out: int, values: list[int], width: int, spec: int, tag: str) -> list[int]:
        """``out = max(0, sum(values) - width)`` with ``out`` bounded below by 0."""
        p = self.program
        p.add_row([out] + values, [1.0] + [-1.0] * len(values), ">=", -float(width), tag)
        if width == 0:
            p.add_row([out] + values, [1.0] + [-1.0] * len(values), "==", 0.0, tag)
            return []
        y = p.add_block(self._name("y"), 1, kind="binary")[0]
        gam = [self.mccormick(y, v, tag) for v in values]
        p.add_row([out] + gam + [y], [1.0] + [-1.0] * len(gam) + [float(width)], "==", 0.0, tag)
        p.add_group(BinaryGroup("clamp", (y,), spec=spec, expr=(tuple(values), (1.0,) * len(values), -float(width)),
                                label=tag))
        return gam


def _eta_rows(layout: OccupancyLayout, prod: ProductMdp, frontier: np.ndarray, n_vars: int):
    """Sparse map from lambda to the expected visits of every product state.

    States carrying lambda are visited ``sum_a lambda``; frontier states are
    visited by their inflow. The initial mass of a frontier state (horizon 1)
    is not a function of lambda and is left to the caller.
    """
    m, A = len(layout.states), layout.n_actions
    visits = layout.visits(np.arange(m))
    pos = np.full(prod.n_states, -1)
    pos[layout.states] = np.arange(m)
    parts = [prod.matrices[a][layout.states][:, frontier].T for a in range(A)]
    inflow = sparse.hstack(parts).tocsr()
    inflow = sparse.hstack([sparse.csr_matrix((len(frontier), layout.block.start)), inflow]).tocsr()
    inflow = sparse.csr_matrix((inflow.data, inflow.indices, inflow.indptr), shape=(len(frontier), n_vars))
    visits = sparse.csr_matrix((visits.data, visits.indices, visits.indptr), shape=(m, n_vars))
    rows = {}
    for p, j in enumerate(layout.states):
        rows[int(j)] = visits[p]
    for p, j in enumerate(frontier):
        rows[int(j)] = inflow[p]
    return rows


def frechet_block(program: SynthesisProgram, builder: _BlockBuilder, spec: int, formula: SpecFormula, mu: int,
                  eta_of) -> FrechetBlock:
    """Lower-bound encoding of ``formula`` with ``mu`` as its output column.

    ``eta_of(literal, k)`` returns the column of the per-position probability.
    """
    form, lit, wins = formula.form, formula.literal, formula.windows()
    tag = f"frechet[{spec}]"
    blk = FrechetBlock(spec, form, mu, {}, windows=wins)

    def eta(k):
        if k not in blk.eta:
            blk.eta[k] = eta_of(lit, k)
        return blk.eta[k]

    if form == ATOM:
        program.add_row([mu, eta(0)], [1.0, -1.0], "==", 0.0, tag)
        return blk
    (a, b), *inner = wins
    if form == EVENTUALLY:
        blk.gammas = builder.maximum(mu, [eta(k) for k in range(a, b + 1)], spec, tag)
    elif form == ALWAYS:
        blk.gammas = builder.clamp(mu, [eta(k) for k in range(a, b + 1)], b - a, spec, tag)
    else:
        c, d = inner[0]
        zeta = program.add_block(f"zeta{spec}", b - a + 1, lb=0.0, ub=1.0)
        for off, m in enumerate(range(a, b + 1)):
            blk.zeta[m] = int(zeta[off])
            vals = [eta(k) for k in range(m + c, m + d + 1)]
            if form == EVENTUALLY_ALWAYS:
                blk.gammas += builder.clamp(blk.zeta[m], vals, d - c, spec, f"{tag}.zeta[{m}]")
            else:
                blk.gammas += builder.maximum(blk.zeta[m], vals, spec, f"{tag}.zeta[{m}]")
        zs = [blk.zeta[m] for m in range(a, b + 1)]
        if form == EVENTUALLY_ALWAYS:
            blk.gammas += builder.maximum(mu, zs, spec, tag)
        else:
            blk.gammas += builder.clamp(mu, zs, b - a, spec, tag)
    blk.groups = [g for g in program.groups if g.spec == spec and g.kind != "candidate"]
    return blk


def build_stage_product(mdp: Mdp, instance: ProblemInstance) -> ProductMdp:
    """Reachable part of the MDP expanded to one stage past the longest formula."""
    return product(expand(mdp, instance.horizon + 1), [])


def assemble_approx_program(prod: ProductMdp, instance: ProblemInstance):
    """Program over stage-indexed occupancies; returns (program, layout, blocks)."""
    H = prod.expanded.horizon
    if instance.horizon + 1 > H:
        raise ValueError(f"stage horizon {H} cannot decide formulas of horizon {instance.horizon}")
    stages = np.array([prod.stage(j) for j in range(prod.n_states)])
    active = np.flatnonzero(stages < H)
    frontier = np.flatnonzero(stages == H)
    program = SynthesisProgram()
    layout = add_flow_block(program, prod.matrices, active, prod.alpha, prod.n_states)
    program.alpha = prod.alpha
    visit_rows = _eta_rows(layout, prod, frontier, program.n_vars)
    base = prod.expanded.base
    by_stage = {t: np.flatnonzero(stages == t) for t in range(1, H + 1)}
    mu = program.add_block("mu", instance.n_specs, lb=0.0, ub=1.0)
    eta_cols: dict = {}

    def eta_of(lit: Atom, k: int) -> int:
        key = (lit.prop, lit.negated, k)
        if key not in eta_cols:
            col = program.add_block(f"eta[{lit}@{k}]", 1, lb=0.0, ub=1.0)[0]
            states = [j for j in by_stage[k + 1] if lit.holds(base.labels[prod.base_state(j)])]
            row = sparse.csr_matrix((1, program.n_vars))
            for j in states:
                r = visit_rows[int(j)]
                row = row + sparse.csr_matrix((r.data, r.indices, r.indptr), shape=(1, program.n_vars))
            row = row - sparse.csr_matrix(([1.0], ([0], [col])), shape=(1, program.n_vars))
            start = float(sum(prod.alpha[j] for j in states if stages[j] == H))
            program.add_rows(row, "==", [-start], tag=f"eta[{lit}@{k}]")
            eta_cols[key] = col
        return eta_cols[key]

    builder = _BlockBuilder(program)
    blocks = [frechet_block(program, builder, i, f, int(mu[i]), eta_of) for i, f in enumerate(instance.specs)]
    add_candidacy_rows(program, mu, instance)
    return program, layout, blocks


def synthesize_approx(mdp: Mdp, instance: ProblemInstance, epsilon: float = 1e-4,
                      settings: Optional[SearchSettings] = None, backend=None) -> SynthesisResult:
    t0 = time.perf_counter()
    prod = build_stage_product(mdp, instance)
    t_prod = time.perf_counter()
    program, layout, blocks = assemble_approx_program(prod, instance)
    log.info("approximate program: %d expanded states, %s", prod.n_states, program.counts())
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
    return SynthesisResult("approx", policy, list(instance.specs), instance.ground_truth, instance.beta,
                           mu, nu, x, entropy_bits(nu), bis.theta, occ, program, z, stats, blocks)
