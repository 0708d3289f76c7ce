"""Satisfaction probabilities, Monte Carlo replay of policies and the observer's entropy.

Random streams: trials are processed in blocks of ``BLOCK`` trajectories and
block ``b`` draws from ``Generator(PCG64(SeedSequence(seed, spawn_key=(b,))))``,
so a run gives the same trajectories whatever the thread count.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .automata import spec_automaton
from .model import Mdp
from .policy import Policy
from .speclang import SpecFormula, evaluate_batch

BLOCK = 4096
Z95 = 1.959963984540054


class IncompatiblePolicy(ValueError):
    pass


def _check_policy(mdp: Mdp, policy: Policy):
    base = policy.product.expanded.base
    if base.states != mdp.states or base.actions != mdp.actions:
        raise IncompatiblePolicy("policy was built for a different model")


def exact_satisfaction(mdp: Mdp, policy: Policy, formula: SpecFormula) -> float:
    """Probability that the policy's runs satisfy ``formula``, by forward propagation.

    The distribution over (policy memory state, formula automaton state) is pushed
    through the induced chain; the mass that enters an accepting automaton state
    is the answer, since accepting states are left right away.
    """
    _check_policy(mdp, policy)
    prod = policy.product
    H = prod.expanded.horizon
    if formula.horizon + 1 > H:
        raise IncompatiblePolicy(f"policy memory distinguishes {H} stages; the formula needs {formula.horizon + 1}")
    dfa = spec_automaton(formula)
    nq = len(dfa.states)
    labels = mdp.labels
    n = prod.n_states
    # automaton successor when entering product state j from automaton state q
    next_q = np.empty((n, nq), dtype=np.int64)
    for j in range(n):
        s, k = prod.base_state(j), prod.stage(j) - 1
        for q in range(nq):
            next_q[j, q] = dfa.index(dfa.step(dfa.states[q], labels[s], k))
    accepting = np.zeros(nq, dtype=bool)
    accepting[[dfa.index(q) for q in dfa.accepting]] = True
    settled = np.array([dfa.is_absorbing(q) and q not in dfa.accepting for q in dfa.states])

    chain_t = policy.chain().T.tocsr()
    dist = np.zeros((n, nq))
    j0 = prod.initial
    dist[j0, next_q[j0, dfa.index(dfa.initial)]] = 1.0
    total = float(dist[:, accepting].sum())
    for _ in range(formula.horizon + 2):
        arrived = chain_t @ dist  # mass reaching j' while still in the old automaton state
        dist = np.zeros_like(dist)
        rows = np.repeat(np.arange(n), nq)
        np.add.at(dist, (rows, next_q.ravel()), arrived.ravel())
        total += float(dist[:, accepting].sum())
        if dist[:, ~settled].sum() <= 0.0:
            break
    return total


@dataclass
class EntropyReport:
    names: list
    sat_probs: np.ndarray
    beta: float
    candidates: list
    likelihoods: np.ndarray
    entropy: float
    source: str
    trials: Optional[int] = None
    half_widths: Optional[np.ndarray] = None
    exact_probs: Optional[np.ndarray] = None
    computed_bounds: Optional[np.ndarray] = None
    warnings: list = field(default_factory=list)
    visits: Optional[np.ndarray] = None  # mean visits per product state and action
    state_visits: Optional[np.ndarray] = None
    state_visit_se: Optional[np.ndarray] = None

    def rows(self) -> list[dict]:
        out = []
        for i, name in enumerate(self.names):
            row = {"name": name,
                   "exactProb": None if self.exact_probs is None else float(self.exact_probs[i]),
                   "empiricalProb": float(self.sat_probs[i]) if self.source == "monte-carlo" else None,
                   "halfWidth": None if self.half_widths is None else float(self.half_widths[i]),
                   "candidate": i in self.candidates,
                   "likelihood": float(self.likelihoods[i])}
            if self.computed_bounds is not None:
                row["computedBound"] = float(self.computed_bounds[i])
            if self.source != "monte-carlo" and self.exact_probs is None:
                row["exactProb"] = float(self.sat_probs[i])
            out.append(row)
        return out

    def to_dict(self) -> dict:
        return {"source": self.source, "trials": self.trials, "beta": self.beta,
                "entropy_bits": float(self.entropy), "candidates": [self.names[i] for i in self.candidates],
                "warnings": list(self.warnings), "specs": self.rows()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def to_tsv(self) -> str:
        buf = io.StringIO()
        cols = ["name", "exactProb", "empiricalProb", "halfWidth", "candidate", "likelihood"]
        if self.computed_bounds is not None:
            cols.append("computedBound")
        w = csv.writer(buf, delimiter="\t", lineterminator="\n")
        w.writerow(cols)
        for row in self.rows():
            w.writerow(["" if row.get(c) is None else (repr(row[c]) if isinstance(row[c], float) else row[c])
                        for c in cols])
        return buf.getvalue()


def adversary_report(sat_probs: Sequence[float], beta: float, names: Optional[Sequence[str]] = None,
                     source: str = "exact-propagation", tol: float = 1e-9) -> EntropyReport:
    """Candidate set by threshold, likelihoods proportional to satisfaction, entropy in bits."""
    p = np.asarray(sat_probs, float)
    if ((p < -tol) | (p > 1 + tol)).any():
        raise ValueError("satisfaction probabilities must lie in [0, 1]")
    names = list(names) if names is not None else [f"spec{i}" for i in range(len(p))]
    cand = [i for i, v in enumerate(p) if v >= beta - tol]
    like = np.zeros_like(p)
    warnings = []
    if cand:
        like[cand] = p[cand] / p[cand].sum()
        nz = like[like > 0]
        h = float(-(nz * np.log2(nz)).sum())
    else:
        warnings.append("empty candidate set: entropy taken as 0")
        h = 0.0
    return EntropyReport(names, p, beta, cand, like, max(h, 0.0), source, warnings=warnings)


def _simulate_block(prod, decisions_cum, truth_props, steps, n, rng):
    A = prod.n_actions
    idx = np.full(n, prod.initial, dtype=np.int64)
    path = np.empty((steps, n), dtype=np.int64)
    acts = np.empty((steps, n), dtype=np.int64)
    for k in range(steps):
        path[k] = idx
        u = rng.random(n)
        a = (decisions_cum[idx] <= u[:, None]).sum(axis=1)
        a = np.minimum(a, A - 1)
        acts[k] = a
        cum = np.cumsum(prod.successor_probs[idx, a], axis=1)
        u2 = rng.random(n) * cum[:, -1]
        b = (cum <= u2[:, None]).sum(axis=1)
        b = np.minimum(b, cum.shape[1] - 1)
        idx = prod.successor_table[idx, a, b]
    base = np.array([st[0] for st in prod.states])[path].T  # (n, steps)
    truth = {p: mask[base] for p, mask in truth_props.items()}
    sa = np.bincount((path * A + acts).ravel(), minlength=prod.n_states * A)
    # per-trajectory visit counts for the variance of state visits
    codes = (np.arange(n)[None, :] * prod.n_states + path).ravel()
    uniq, counts = np.unique(codes, return_counts=True)
    states = uniq % prod.n_states
    s1 = np.bincount(states, weights=counts, minlength=prod.n_states)
    s2 = np.bincount(states, weights=counts.astype(float) ** 2, minlength=prod.n_states)
    return truth, sa, s1, s2


def simulate(mdp: Mdp, policy: Policy, specs: Sequence[SpecFormula], trials: int, seed: int, beta: float = 0.8,
             threads: int = 1) -> EntropyReport:
    """Replay the policy ``trials`` times and tally satisfaction and visits."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    _check_policy(mdp, policy)
    prod = policy.product
    H = prod.expanded.horizon
    need = max(f.horizon for f in specs) + 1
    if need > H:
        raise IncompatiblePolicy(f"policy memory distinguishes {H} stages; the specs need {need}")
    steps = H + 2
    cum = np.cumsum(policy.decisions, axis=1)
    props = {f.literal.prop for f in specs}
    truth_props = {p: mdp.holds(p) for p in props}
    n_blocks = math.ceil(trials / BLOCK)

    def run(b):
        n = min(BLOCK, trials - b * BLOCK)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(b,))))
        truth, sa, s1, s2 = _simulate_block(prod, cum, truth_props, steps, n, rng)
        sat = np.array([int(evaluate_batch(f, truth).sum()) for f in specs])
        return sat, sa, s1, s2

    if threads > 1 and n_blocks > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, range(n_blocks)))
    else:
        parts = [run(b) for b in range(n_blocks)]
    sat = sum(p[0] for p in parts)
    sa = sum(p[1] for p in parts).astype(float)
    s1 = sum(p[2] for p in parts)
    s2 = sum(p[3] for p in parts)
    rates = sat / trials
    half = Z95 * np.sqrt(rates * (1 - rates) / trials)
    mean = s1 / trials
    var = np.maximum(s2 / trials - mean ** 2, 0.0)
    rep = adversary_report(rates, beta, [str(f) for f in specs], source="monte-carlo")
    rep.trials = trials
    rep.half_widths = half
    rep.visits = (sa / trials).reshape(prod.n_states, prod.n_actions)
    rep.state_visits = mean
    rep.state_visit_se = np.sqrt(var / trials)
    return rep


def exact_report(mdp: Mdp, policy: Policy, specs: Sequence[SpecFormula], beta: float) -> EntropyReport:
    probs = np.array([exact_satisfaction(mdp, policy, f) for f in specs])
    rep = adversary_report(np.clip(probs, 0.0, 1.0), beta, [str(f) for f in specs])
    rep.exact_probs = probs
    return rep


def visit_z_scores(expected: np.ndarray, report: EntropyReport, states: np.ndarray) -> np.ndarray:
    """Deviation of simulated state visits from ``expected``, in standard errors.

    The standard error is the larger of the model-based ``sqrt(v(1-v)/n)`` and the
    sample estimate: the first breaks down for states hit once by chance, the
    second for rare states never hit.
    """
    n = report.trials
    v = np.clip(np.asarray(expected, float), 0.0, None)
    model_se = np.sqrt(v * np.clip(1.0 - v, 0.0, None) / n)
    se = np.maximum(model_se, report.state_visit_se)
    d = np.abs(report.state_visits - v)
    out = np.zeros(len(v))
    pos = se > 0
    out[pos] = d[pos] / se[pos]
    out[~pos & (d > 1e-12)] = np.inf
    return out[states]


def synthesis_report(result, mdp: Mdp, beta: float) -> dict:
    """Per-spec table of a synthesis run with chain-propagated satisfaction.

    ``computed`` is the program's value of mu (the Frechet bound for the
    approximate method) and ``actual`` the exact probability under the policy.
    Contains no timings, so identical inputs give identical documents.
    """
    actual = exact_report(mdp, result.policy, result.specs, beta)
    rows = []
    for i, row in enumerate(result.table()):
        rows.append({**row, "computed": row["mu"], "actual": float(actual.exact_probs[i]),
                     "likelihood": float(actual.likelihoods[i])})
    stats = {k: v for k, v in result.stats.items() if k not in ("wall_time", "product_time", "history")}
    return {
        "format": "specleak-report/1",
        "method": result.method,
        "beta": beta,
        "entropy_bits": float(result.entropy),
        "theta": float(result.theta),
        "candidates": [str(result.specs[i]) for i in result.candidate_set],
        "ground_truth": str(result.specs[result.ground_truth]),
        "specs": rows,
        "adversary": actual.to_dict(),
        "solver": stats,
    }
