"""Environment MDPs and their stage-expanded versions."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
from scipy import sparse

ROW_SUM_TOL = 1e-9


class ModelError(ValueError):
    """Raised when a model document is malformed or violates an MDP invariant."""


@dataclass(frozen=True, eq=False)
class Mdp:
    """Finite MDP with labelled states.

    ``P[s, a, s']`` holds transition probabilities, indexed by the positions of
    the names in ``states`` and ``actions``.
    """

    states: tuple[str, ...]
    initial: str
    actions: tuple[str, ...]
    P: np.ndarray
    atomic_props: frozenset[str]
    labels: tuple[frozenset[str], ...]
    _state_index: dict[str, int] = field(init=False, repr=False)
    _action_index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_state_index", {s: i for i, s in enumerate(self.states)})
        object.__setattr__(self, "_action_index", {a: i for i, a in enumerate(self.actions)})
        P = np.asarray(self.P, dtype=float)
        P.setflags(write=False)
        object.__setattr__(self, "P", P)
        self.validate()

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def initial_index(self) -> int:
        return self._state_index[self.initial]

    def state_index(self, name: str) -> int:
        return self._state_index[name]

    def action_index(self, name: str) -> int:
        return self._action_index[name]

    def validate(self):
        n, m = self.n_states, self.n_actions
        if len(self._state_index) != n:
            raise ModelError("duplicate state names")
        if len(self._action_index) != m:
            raise ModelError("duplicate action names")
        if self.initial not in self._state_index:
            raise ModelError(f"initial state {self.initial!r} is not a declared state")
        if self.P.shape != (n, m, n):
            raise ModelError(f"transition array has shape {self.P.shape}, expected {(n, m, n)}")
        if len(self.labels) != n:
            raise ModelError("one label set per state is required")
        if (self.P < 0).any():
            s, a, _ = np.argwhere(self.P < 0)[0]
            raise ModelError(f"negative probability at state {self.states[s]!r}, action {self.actions[a]!r}")
        sums = self.P.sum(axis=2)
        for s, a in np.argwhere(np.abs(sums - 1.0) > ROW_SUM_TOL):
            if sums[s, a] == 0:
                raise ModelError(
                    f"action {self.actions[a]!r} is not enabled in state {self.states[s]!r}")
            raise ModelError(
                f"probabilities out of state {self.states[s]!r} under action "
                f"{self.actions[a]!r} sum to {sums[s, a]:.12g}, not 1")
        for s, lab in zip(self.states, self.labels):
            unknown = set(lab) - set(self.atomic_props)
            if unknown:
                raise ModelError(f"state {s!r} carries undeclared propositions {sorted(unknown)}")

    def successors(self, s: int, a: int) -> tuple[np.ndarray, np.ndarray]:
        nxt = np.flatnonzero(self.P[s, a])
        return nxt, self.P[s, a, nxt]

    def holds(self, prop: str) -> np.ndarray:
        """Boolean mask of the states labelled with ``prop``."""
        return np.array([prop in lab for lab in self.labels])

    def to_dict(self) -> dict:
        transitions = []
        for s, a, t in zip(*np.nonzero(self.P)):
            transitions.append({"from": self.states[s], "action": self.actions[a],
                                "to": self.states[t], "prob": float(self.P[s, a, t])})
        return {
            "states": list(self.states),
            "initial": self.initial,
            "actions": list(self.actions),
            "atomic_props": sorted(self.atomic_props),
            "transitions": transitions,
            "labels": {s: sorted(lab) for s, lab in zip(self.states, self.labels) if lab},
        }


def model_from_dict(doc: Mapping) -> Mdp:
    """Build a validated :class:`Mdp` from a parsed model document.

    Rows are renormalized after the 1e-9 row-sum check so that decimal
    round-off in text files does not leak into downstream sums.
    """
    if not isinstance(doc, Mapping):
        raise ModelError("model document must be a JSON object")
    for key in ("states", "initial", "actions", "transitions"):
        if key not in doc:
            raise ModelError(f"model document is missing field {key!r}")
    states = _string_list(doc["states"], "states")
    actions = _string_list(doc["actions"], "actions")
    initial = doc["initial"]
    if not isinstance(initial, str):
        raise ModelError("field 'initial' must be a string")
    sidx = {s: i for i, s in enumerate(states)}
    aidx = {a: i for i, a in enumerate(actions)}
    if len(sidx) != len(states):
        raise ModelError("field 'states' contains duplicates")
    if len(aidx) != len(actions):
        raise ModelError("field 'actions' contains duplicates")
    if initial not in sidx:
        raise ModelError(f"initial state {initial!r} is not listed in 'states'")

    P = np.zeros((len(states), len(actions), len(states)))
    seen = set()
    if not isinstance(doc["transitions"], list):
        raise ModelError("field 'transitions' must be an array")
    for n, tr in enumerate(doc["transitions"]):
        where = f"transitions[{n}]"
        if not isinstance(tr, Mapping):
            raise ModelError(f"{where}: expected an object")
        missing = {"from", "action", "to", "prob"} - set(tr)
        if missing:
            raise ModelError(f"{where}: missing {sorted(missing)}")
        src, act, dst = tr["from"], tr["action"], tr["to"]
        if src not in sidx:
            raise ModelError(f"{where}: unknown state {src!r}")
        if dst not in sidx:
            raise ModelError(f"{where}: unknown state {dst!r}")
        if act not in aidx:
            raise ModelError(f"{where}: unknown action {act!r}")
        key = (src, act, dst)
        if key in seen:
            raise ModelError(f"{where}: duplicate entry {src!r} --{act}--> {dst!r}")
        seen.add(key)
        prob = tr["prob"]
        if isinstance(prob, bool) or not isinstance(prob, (int, float)) or not 0 <= prob <= 1:
            raise ModelError(f"{where}: probability must be a number in [0, 1], got {prob!r}")
        P[sidx[src], aidx[act], sidx[dst]] = float(prob)

    labels_doc = doc.get("labels", {})
    if not isinstance(labels_doc, Mapping):
        raise ModelError("field 'labels' must map state names to arrays")
    labels = [frozenset()] * len(states)
    for s, props in labels_doc.items():
        if s not in sidx:
            raise ModelError(f"labels: unknown state {s!r}")
        labels[sidx[s]] = frozenset(_string_list(props, f"labels[{s!r}]"))
    if "atomic_props" in doc:
        aps = frozenset(_string_list(doc["atomic_props"], "atomic_props"))
    else:
        aps = frozenset().union(*labels)

    sums = P.sum(axis=2)
    for s, a in np.argwhere(np.abs(sums - 1.0) > ROW_SUM_TOL):
        if sums[s, a] == 0:
            raise ModelError(f"action {actions[a]!r} is not enabled in state {states[s]!r}")
        raise ModelError(f"row ({states[s]!r}, {actions[a]!r}) sums to {sums[s, a]:.12g}, not 1")
    P = P / sums[:, :, None]
    return Mdp(tuple(states), initial, tuple(actions), P, aps, tuple(labels))


def _string_list(value, where: str) -> list[str]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ModelError(f"field {where} must be an array of strings")
    return list(value)


def load_model(source) -> Mdp:
    """Load a model from a path, a JSON string, or an already-parsed mapping."""
    if isinstance(source, Mapping):
        return model_from_dict(source)
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        try:
            text = Path(source).read_text(encoding="utf-8")
        except OSError as exc:
            raise ModelError(f"cannot read model file {source}: {exc}") from exc
    else:
        text = source
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"model is not valid JSON (line {exc.lineno}, column {exc.colno}): {exc.msg}") from exc
    return model_from_dict(doc)


@dataclass(frozen=True, eq=False)
class ExpandedMdp:
    """Stage-tracking expansion ``M x [horizon]``.

    State ``(s, t)`` with ``t`` in ``1..horizon`` is stored at index
    ``s * horizon + (t - 1)``. The stage advances by one per step and holds at
    ``horizon``.
    """

    base: Mdp
    horizon: int

    def __post_init__(self):
        if self.horizon < 1:
            raise ModelError("horizon must be at least 1")

    @property
    def n_states(self) -> int:
        return self.base.n_states * self.horizon

    @property
    def actions(self) -> tuple[str, ...]:
        return self.base.actions

    @property
    def initial(self) -> tuple[int, int]:
        return (self.base.initial_index, 1)

    def index(self, s: int, t: int) -> int:
        return s * self.horizon + (t - 1)

    def state(self, idx: int) -> tuple[int, int]:
        s, r = divmod(idx, self.horizon)
        return s, r + 1

    def next_stage(self, t: int) -> int:
        return t + 1 if t < self.horizon else t

    def label(self, s: int, t: int) -> frozenset:
        return self.base.labels[s] | {t}

    @property
    def atomic_props(self) -> frozenset:
        return self.base.atomic_props | frozenset(range(1, self.horizon + 1))

    def probability(self, src: tuple[int, int], a: int, dst: tuple[int, int]) -> float:
        (s, t), (s2, t2) = src, dst
        if t2 != self.next_stage(t):
            return 0.0
        return float(self.base.P[s, a, s2])

    def successors(self, s: int, t: int, a: int) -> Iterable[tuple[tuple[int, int], float]]:
        t2 = self.next_stage(t)
        nxt, probs = self.base.successors(s, a)
        for s2, p in zip(nxt, probs):
            yield (int(s2), t2), float(p)

    def transition_matrix(self, a: int) -> sparse.csr_matrix:
        rows, cols, vals = [], [], []
        for s in range(self.base.n_states):
            nxt, probs = self.base.successors(s, a)
            for t in range(1, self.horizon + 1):
                t2 = self.next_stage(t)
                rows.extend([self.index(s, t)] * len(nxt))
                cols.extend(self.index(int(s2), t2) for s2 in nxt)
                vals.extend(probs)
        n = self.n_states
        return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


def expand(mdp: Mdp, horizon: int) -> ExpandedMdp:
    if horizon < 1:
        raise ModelError("horizon must be at least 1")
    return ExpandedMdp(mdp, int(horizon))
