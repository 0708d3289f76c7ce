"""Stage-aware DFAs for the supported fragment and the pruned product MDP.

DFA symbols are pairs ``(labels, k)``: the label set of a state and the word
position ``k`` at which it is read. On an expanded MDP the state ``(s, t)`` is
read at position ``k = t - 1``, so the initial state supplies position 0.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from itertools import product as iproduct
from typing import Optional, Sequence

import numpy as np
from scipy import sparse

from .model import ExpandedMdp
from .speclang import (ALWAYS, ALWAYS_EVENTUALLY, ATOM, EVENTUALLY, EVENTUALLY_ALWAYS, Atom,
                       SpecFormula, classify)


class AlphabetMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Guard:
    """Conjunction of an optional literal test and a position interval ``lo <= k <= hi``."""

    literal: Optional[Atom] = None
    polarity: bool = True
    lo: int = 0
    hi: Optional[int] = None

    def matches(self, labels, k: int) -> bool:
        if k < self.lo or (self.hi is not None and k > self.hi):
            return False
        return self.literal is None or self.literal.holds(labels) == self.polarity

    def __str__(self):
        parts = []
        if self.literal is not None:
            parts.append(str(self.literal) if self.polarity else f"not({self.literal})")
        if self.lo > 0 or self.hi is not None:
            parts.append(f"k in [{self.lo},{'inf' if self.hi is None else self.hi}]")
        return " & ".join(parts) or "true"


TRUE = Guard()


@dataclass(frozen=True, eq=False)
class Dfa:
    """Deterministic automaton with guarded edges.

    ``horizon`` is the last word position the automaton inspects, or None for
    position-independent automata.
    """

    states: tuple[str, ...]
    initial: str
    edges: dict  # state -> tuple[(Guard, dst), ...]
    accepting: frozenset
    terminal: Optional[str] = None
    horizon: Optional[int] = None
    props: frozenset = frozenset()
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {q: i for i, q in enumerate(self.states)})
        if set(self.edges) != set(self.states):
            raise ValueError("every state needs an edge list")
        for q, out in self.edges.items():
            for _, dst in out:
                if dst not in self._index:
                    raise ValueError(f"edge {q} -> {dst} leaves the state set")

    def index(self, q: str) -> int:
        return self._index[q]

    def step(self, q: str, labels, k: int) -> str:
        hits = [dst for guard, dst in self.edges[q] if guard.matches(labels, k)]
        if len(hits) != 1:
            raise ValueError(f"state {q!r} has {len(hits)} enabled edges on ({sorted(labels)}, k={k})")
        return hits[0]

    def run(self, word: Sequence, start: int = 0) -> list[str]:
        """States visited after reading each symbol, positions starting at ``start``."""
        q, visited = self.initial, []
        for k, labels in enumerate(word, start):
            q = self.step(q, labels, k)
            visited.append(q)
        return visited

    def accepts(self, word: Sequence) -> bool:
        return any(q in self.accepting for q in self.run(word))

    def is_absorbing(self, q: str) -> bool:
        return all(dst == q for _, dst in self.edges[q])

    def check_deterministic(self, props, max_k: int):
        """Verify by enumeration that each state's guards partition every symbol."""
        props = sorted(props)
        for q in self.states:
            for bits in iproduct((False, True), repeat=len(props)):
                labels = {p for p, b in zip(props, bits) if b}
                for k in range(max_k + 1):
                    self.step(q, labels, k)


def _edges(*items):
    return tuple((g, d) for g, d in items)


def build_dfa(formula: SpecFormula) -> Dfa:
    """Construct the stage-aware DFA accepting exactly the words satisfying ``formula``."""
    form = classify(formula)
    lit = formula.literal
    yes, no = Guard(lit, True), Guard(lit, False)

    def g(polarity, lo=0, hi=None):
        return Guard(lit, polarity, lo, hi)

    def rng(lo, hi=None):
        return Guard(None, True, lo, hi)

    acc, rej = "acc", "rej"
    edges = {acc: _edges((TRUE, acc)), rej: _edges((TRUE, rej))}

    if form == ATOM:
        edges["q0"] = _edges((yes, acc), (no, rej))
        states = ("q0", acc, rej)

    elif form == EVENTUALLY:
        (a, b), = formula.windows()
        items = [(g(True, a, b), acc), (g(False, b, b), rej), (rng(b + 1), rej)]
        if a > 0:
            items.append((rng(0, a - 1), "q0"))
        if b > a:
            items.append((g(False, a, b - 1), "q0"))
        edges["q0"] = _edges(*items)
        states = ("q0", acc, rej)

    elif form == ALWAYS:
        (a, b), = formula.windows()
        items = [(g(False, a, b), rej), (g(True, b, b), acc), (rng(b + 1), rej)]
        if a > 0:
            items.append((rng(0, a - 1), "q0"))
        if b > a:
            items.append((g(True, a, b - 1), "q0"))
        edges["q0"] = _edges(*items)
        states = ("q0", acc, rej)

    elif form == EVENTUALLY_ALWAYS:
        (a, b), (c, d) = formula.windows()
        full, first, last = d - c + 1, a + d, b + d
        names = [f"s{j}" for j in range(full + 1)]
        for j in range(full + 1):
            nxt = min(j + 1, full)
            if nxt == full:
                on_p = [(g(True, first, last), acc), (g(True, last + 1), rej)]
                if first > 0:
                    on_p.append((g(True, 0, first - 1), names[full]))
            else:
                on_p = [(g(True, last), rej)]
                if last > 0:
                    on_p.append((g(True, 0, last - 1), names[nxt]))
            off_p = [(g(False, last), rej)]
            if last > 0:
                off_p.append((g(False, 0, last - 1), names[0]))
            edges[names[j]] = _edges(*on_p, *off_p)
        states = tuple(names) + (acc, rej)
        return Dfa(states, names[0], edges, frozenset({acc}), None, formula.horizon,
                   frozenset({lit.prop}))

    elif form == ALWAYS_EVENTUALLY:
        (a, b), (c, d) = formula.windows()
        gap_limit, first, last = d - c + 1, a + d, b + d
        names = [f"g{j}" for j in range(gap_limit + 1)]
        for j in range(gap_limit + 1):
            on_p = [(g(True, last, last), acc), (g(True, last + 1), rej)]
            if last > 0:
                on_p.append((g(True, 0, last - 1), names[0]))
            nxt = min(j + 1, gap_limit)
            if nxt == gap_limit:
                off_p = [(g(False, first), rej)]
                if first > 0:
                    off_p.append((g(False, 0, first - 1), names[gap_limit]))
            else:
                off_p = [(g(False, last, last), acc), (g(False, last + 1), rej)]
                if last > 0:
                    off_p.append((g(False, 0, last - 1), names[nxt]))
            edges[names[j]] = _edges(*on_p, *off_p)
        states = tuple(names) + (acc, rej)
        return Dfa(states, names[gap_limit], edges, frozenset({acc}), None, formula.horizon,
                   frozenset({lit.prop}))

    else:  # pragma: no cover - classify rejects everything else
        raise ValueError(f"unsupported form {form}")

    return Dfa(states, "q0", edges, frozenset({acc}), None, formula.horizon, frozenset({lit.prop}))


def add_terminal(dfa: Dfa) -> Dfa:
    """Route accepting states to a fresh absorbing terminal state."""
    name = "q_t"
    while name in dfa.states:
        name += "_"
    edges = dict(dfa.edges)
    for q in list(dfa.accepting) + [name]:
        edges[q] = ((TRUE, name),)
    return Dfa(dfa.states + (name,), dfa.initial, edges, dfa.accepting, name, dfa.horizon, dfa.props)


def spec_automaton(formula: SpecFormula) -> Dfa:
    return add_terminal(build_dfa(formula))


@dataclass(frozen=True, eq=False)
class ProductMdp:
    """Reachable part of ``expanded x A_1 x ... x A_N``.

    ``states[j]`` is ``(s, t, q_1, ..., q_N)`` with ``q_i`` an index into
    ``dfas[i].states``; states are sorted lexicographically.
    """

    expanded: ExpandedMdp
    dfas: tuple[Dfa, ...]
    states: tuple[tuple[int, ...], ...]
    initial: int
    matrices: tuple[sparse.csr_matrix, ...]  # one (n x n) matrix per action
    accepting: np.ndarray  # (N, n) boolean
    absorbing: np.ndarray  # (n,) boolean, the set B
    successor_table: np.ndarray  # (n, A, branching) product successor, -1 padded
    successor_probs: np.ndarray  # (n, A, branching)
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.states)})

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.matrices)

    @property
    def n_specs(self) -> int:
        return len(self.dfas)

    @property
    def alpha(self) -> np.ndarray:
        out = np.zeros(self.n_states)
        out[self.initial] = 1.0
        return out

    def index(self, state: tuple) -> int:
        return self._index[tuple(state)]

    def base_state(self, j: int) -> int:
        return self.states[j][0]

    def stage(self, j: int) -> int:
        return self.states[j][1]

    def describe(self, j: int) -> dict:
        st = self.states[j]
        return {
            "state": self.expanded.base.states[st[0]],
            "stage": st[1],
            "automata": [d.states[q] for d, q in zip(self.dfas, st[2:])],
        }


def product(expanded: ExpandedMdp, dfas: Sequence[Dfa]) -> ProductMdp:
    """Build the product with each modified DFA, keeping only reachable states."""
    dfas = tuple(dfas)
    base = expanded.base
    for i, dfa in enumerate(dfas):
        if dfa.horizon is not None and dfa.horizon + 1 > expanded.horizon:
            raise AlphabetMismatch(
                f"automaton {i} reads positions up to {dfa.horizon}, but the expanded MDP "
                f"distinguishes stages only up to {expanded.horizon}")
        unknown = set(dfa.props) - set(base.atomic_props)
        if unknown:
            raise AlphabetMismatch(f"automaton {i} refers to unknown propositions {sorted(unknown)}")

    cache: dict = {}

    def delta(i, q, s, k):
        key = (i, q, s, k)
        if key not in cache:
            d = dfas[i]
            cache[key] = d.index(d.step(d.states[q], base.labels[s], k))
        return cache[key]

    s0, t0 = expanded.initial
    init = (s0, t0) + tuple(delta(i, d.index(d.initial), s0, t0 - 1) for i, d in enumerate(dfas))
    seen = {init}
    queue = deque([init])
    edges = {}
    while queue:
        st = queue.popleft()
        s, t, qs = st[0], st[1], st[2:]
        t2 = expanded.next_stage(t)
        for a in range(base.n_actions):
            out = []
            nxt, probs = base.successors(s, a)
            for s2, p in zip(nxt, probs):
                s2 = int(s2)
                st2 = (s2, t2) + tuple(delta(i, q, s2, t2 - 1) for i, q in enumerate(qs))
                out.append((st2, float(p)))
                if st2 not in seen:
                    seen.add(st2)
                    queue.append(st2)
            edges[st, a] = out

    states = tuple(sorted(seen))
    index = {st: j for j, st in enumerate(states)}
    n, m = len(states), base.n_actions
    branching = max(len(v) for v in edges.values())
    succ = np.full((n, m, branching), -1, dtype=np.int64)
    succ_p = np.zeros((n, m, branching))
    mats = []
    for a in range(m):
        rows, cols, vals = [], [], []
        for j, st in enumerate(states):
            for b, (st2, p) in enumerate(edges[st, a]):
                rows.append(j)
                cols.append(index[st2])
                vals.append(p)
                succ[j, a, b] = index[st2]
                succ_p[j, a, b] = p
        mats.append(sparse.csr_matrix((vals, (rows, cols)), shape=(n, n)))

    accepting = np.zeros((len(dfas), n), dtype=bool)
    absorbing_q = []
    for i, d in enumerate(dfas):
        acc_idx = {d.index(q) for q in d.accepting}
        absorbing_q.append({d.index(q) for q in d.states if d.is_absorbing(q)})
        for j, st in enumerate(states):
            accepting[i, j] = st[2 + i] in acc_idx
    absorbing = np.array([all(st[2 + i] in absorbing_q[i] for i in range(len(dfas))) for st in states],
                         dtype=bool)
    return ProductMdp(expanded, dfas, states, index[init], tuple(mats), accepting, absorbing, succ, succ_p)


def absorbing_set(prod: ProductMdp) -> set[int]:
    """Indices of the product states whose automata coordinates can no longer change."""
    return set(np.flatnonzero(prod.absorbing).tolist())


def dump_dfa(dfa: Dfa) -> str:
    lines = []
    for q in dfa.states:
        for guard, dst in dfa.edges[q]:
            lines.append(f"{q}\t{guard}\t{dst}")
    return "\n".join(lines) + "\n"


def dump_product(prod: ProductMdp) -> str:
    base = prod.expanded.base

    def name(j):
        d = prod.describe(j)
        return "(" + ",".join([d["state"], str(d["stage"])] + d["automata"]) + ")"

    lines = []
    for a, mat in enumerate(prod.matrices):
        coo = mat.tocoo()
        for r, c, v in zip(coo.row, coo.col, coo.data):
            lines.append(f"{name(r)}\t{base.actions[a]}:{v:.12g}\t{name(c)}")
    return "\n".join(lines) + "\n"
