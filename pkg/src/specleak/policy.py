"""Finite-memory policies extracted from occupancy measures, and synthesis results."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .automata import ProductMdp, dump_dfa, product, spec_automaton
from .model import Mdp, expand
from .speclang import parse_spec

ZERO_OUTFLOW = 1e-12


class PolicyError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Policy:
    """Randomized decisions on the states of a product MDP.

    The product's extra coordinates ``(t, q_1, ..., q_N)`` act as memory that is
    updated deterministically from the observed base states, so the policy is
    executable on the original MDP. With no automata the memory is the stage
    counter alone.
    """

    product: ProductMdp
    decisions: np.ndarray  # (n_states, n_actions), rows sum to 1

    kind = "finite-memory"

    def __post_init__(self):
        d = np.asarray(self.decisions, float)
        if d.shape != (self.product.n_states, self.product.n_actions):
            raise PolicyError(f"decision table has shape {d.shape}")
        if (d < 0).any() or np.abs(d.sum(axis=1) - 1).max() > 1e-9:
            raise PolicyError("each decision row must be a probability distribution")
        d.setflags(write=False)
        object.__setattr__(self, "decisions", d)

    def distribution(self, j: int) -> np.ndarray:
        return self.decisions[j]

    def chain(self):
        """Sparse transition matrix of the policy-induced Markov chain on the product."""
        mats = self.product.matrices
        out = mats[0].multiply(self.decisions[:, [0]])
        for a in range(1, len(mats)):
            out = out + mats[a].multiply(self.decisions[:, [a]])
        return out.tocsr()

    def to_dict(self, specs: Optional[list[str]] = None) -> dict:
        prod = self.product
        base = prod.expanded.base
        rows = []
        for j in range(prod.n_states):
            d = prod.describe(j)
            rows.append({"state": d["state"], "stage": d["stage"], "memory": d["automata"],
                         "actions": {a: float(p) for a, p in zip(base.actions, self.decisions[j]) if p > 0}})
        return {
            "format": "specleak-policy/1",
            "kind": self.kind,
            "memory": {"stage_horizon": prod.expanded.horizon,
                       "specs": specs if specs is not None else [],
                       "automata": [dump_dfa(d) for d in prod.dfas]},
            "initial": prod.describe(prod.initial),
            "decisions": rows,
            "default": "uniform",
        }

    def dumps(self, specs=None) -> str:
        return json.dumps(self.to_dict(specs), indent=1)


def extract_policy(occupancy: np.ndarray, prod: ProductMdp, tol: float = 1e-9) -> Policy:
    """Normalize the occupancy measure row-wise; rows with no outflow become uniform."""
    lam = np.asarray(occupancy, float)
    if lam.shape != (prod.n_states, prod.n_actions):
        raise PolicyError(f"occupancy has shape {lam.shape}, expected {(prod.n_states, prod.n_actions)}")
    if (lam < -tol).any():
        j, a = np.argwhere(lam < -tol)[0]
        raise PolicyError(f"negative occupancy {lam[j, a]:.3g} at product state {j}, action {a}")
    lam = np.clip(lam, 0.0, None)
    out = lam.sum(axis=1, keepdims=True)
    uniform = np.full_like(lam, 1.0 / prod.n_actions)
    with np.errstate(invalid="ignore", divide="ignore"):
        dec = np.where(out > ZERO_OUTFLOW, lam / np.where(out > 0, out, 1.0), uniform)
    return Policy(prod, dec)


def policy_from_dict(doc: dict, mdp: Mdp) -> Policy:
    """Rebuild a policy file against its model; the memory structure is reconstructed."""
    if doc.get("format") != "specleak-policy/1":
        raise PolicyError("not a policy document")
    mem = doc["memory"]
    specs = [parse_spec(s) for s in mem["specs"]]
    prod = product(expand(mdp, int(mem["stage_horizon"])), [spec_automaton(s) for s in specs])
    index = {}
    for j in range(prod.n_states):
        d = prod.describe(j)
        index[(d["state"], d["stage"], tuple(d["automata"]))] = j
    dec = np.full((prod.n_states, prod.n_actions), 1.0 / prod.n_actions)
    for row in doc["decisions"]:
        key = (row["state"], row["stage"], tuple(row["memory"]))
        if key not in index:
            raise PolicyError(f"policy row {key} does not match the model's product")
        vec = np.zeros(prod.n_actions)
        for a, p in row["actions"].items():
            vec[mdp.action_index(a)] = p
        dec[index[key]] = vec / vec.sum()
    return Policy(prod, dec)


def load_policy(path, mdp: Mdp) -> Policy:
    return policy_from_dict(json.loads(Path(path).read_text(encoding="utf-8")), mdp)


@dataclass
class SynthesisResult:
    method: str
    policy: Policy
    specs: list
    ground_truth: int
    beta: float
    mu: np.ndarray
    nu: np.ndarray
    x: np.ndarray
    entropy: float
    theta: float
    occupancy: np.ndarray
    program: object
    witness: np.ndarray
    stats: dict = field(default_factory=dict)
    blocks: list = field(default_factory=list)

    @property
    def candidate_set(self) -> list[int]:
        return [i for i, v in enumerate(self.x) if v > 0.5]

    def table(self) -> list[dict]:
        return [{"name": str(s), "mu": float(m), "nu": float(n), "x": int(round(v)),
                 "ground_truth": i == self.ground_truth}
                for i, (s, m, n, v) in enumerate(zip(self.specs, self.mu, self.nu, self.x))]
