"""Reference computations that share no code with the package under test."""

from __future__ import annotations

import itertools

import numpy as np


def window_semantics(word, form, lit, windows) -> bool:
    """Direct quantifier expansion of the five supported shapes at position 0.

    ``word`` is a sequence of label sets, ``lit`` a ``(prop, negated)`` pair and
    ``windows`` the interval list from outer to inner operator.
    """
    prop, neg = lit

    def h(k):
        return (prop in word[k]) != neg

    if form == "ATOM":
        return h(0)
    (a, b), *inner = windows
    if form == "F":
        return any(h(k) for k in range(a, b + 1))
    if form == "G":
        return all(h(k) for k in range(a, b + 1))
    c, d = inner[0]
    if form == "FG":
        return any(all(h(t) for t in range(m + c, m + d + 1)) for m in range(a, b + 1))
    if form == "GF":
        return all(any(h(t) for t in range(m + c, m + d + 1)) for m in range(a, b + 1))
    raise ValueError(form)


def gf_double_loop(word, p, a=1, b=10, c=0, d=5) -> bool:
    """G[a,b] F[c,d] p checked with two explicit loops."""
    for m in range(a, b + 1):
        found = False
        for t in range(m + c, m + d + 1):
            if p in word[t]:
                found = True
                break
        if not found:
            return False
    return True


def enumerate_runs(P, initial, choose, length):
    """All state sequences of ``length`` positions with their probabilities.

    ``choose(k, s)`` returns the action distribution used at position ``k`` in
    state ``s``.
    """
    n_states = P.shape[0]
    out = []
    for seq in itertools.product(range(n_states), repeat=length - 1):
        path = (initial,) + seq
        prob = 1.0
        for k in range(length - 1):
            dist = choose(k, path[k])
            prob *= float(np.dot(dist, P[path[k], :, path[k + 1]]))
            if prob == 0.0:
                break
        if prob > 0.0:
            out.append((path, prob))
    return out


def stage_visits_by_propagation(P, initial, choose, steps):
    """Expected visits to each (position, state) under a position-dependent policy."""
    n = P.shape[0]
    dist = np.zeros(n)
    dist[initial] = 1.0
    table = np.zeros((steps, n))
    for k in range(steps):
        table[k] = dist
        nxt = np.zeros(n)
        for s in range(n):
            if dist[s] > 0:
                nxt += dist[s] * np.einsum("a,at->t", choose(k, s), P[s])
        dist = nxt
    return table


def deterministic_visits(matrices, transient, alpha):
    """Expected visits of every deterministic stationary policy on the transient states.

    ``matrices[a]`` is a dense (n x n) transition matrix. Yields
    ``(choice, visits)`` where ``visits[j, a]`` is the expected number of times
    action ``a`` is taken in transient state ``j``.
    """
    n_actions = len(matrices)
    m = len(transient)
    for choice in itertools.product(range(n_actions), repeat=m):
        Q = np.zeros((m, m))
        for p, j in enumerate(transient):
            Q[p] = matrices[choice[p]][j, transient]
        x = np.linalg.solve(np.eye(m) - Q.T, alpha[transient])
        lam = np.zeros((m, n_actions))
        lam[np.arange(m), choice] = x
        yield choice, lam


def grid_maximum(fun, vertices, steps=60):
    """Maximum of ``fun`` over convex combinations of up to three vertices on a lattice."""
    V = np.asarray(vertices, float)
    best = -np.inf
    k = V.shape[0]
    for i, j, l in itertools.combinations_with_replacement(range(k), 3):
        for u in range(steps + 1):
            for v in range(steps + 1 - u):
                w = steps - u - v
                pt = (u * V[i] + v * V[j] + w * V[l]) / steps
                best = max(best, fun(pt))
    return best


def entropy_bits(p) -> float:
    p = np.asarray(p, float)
    p = p[p > 0]
    p = p / p.sum()
    return float(-(p * np.log2(p)).sum())


def window_semantics_batch(bits, form, negated, windows) -> np.ndarray:
    """Vectorized ``window_semantics`` for a boolean matrix of words (one row each)."""
    h = np.asarray(bits, bool) != negated
    if form == "ATOM":
        return h[:, 0]
    (a, b), *inner = windows
    if form == "F":
        return h[:, a:b + 1].any(axis=1)
    if form == "G":
        return h[:, a:b + 1].all(axis=1)
    c, d = inner[0]
    per_m = np.stack([(h[:, m + c:m + d + 1].all(axis=1) if form == "FG" else h[:, m + c:m + d + 1].any(axis=1))
                      for m in range(a, b + 1)], axis=1)
    return per_m.any(axis=1) if form == "FG" else per_m.all(axis=1)
