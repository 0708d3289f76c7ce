"""Mixed-binary linear programs with an entropy objective over designated variables."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import sparse

LOG2 = np.log(2.0)


@dataclass(frozen=True)
class VarBlock:
    name: str
    start: int
    size: int
    kind: str  # "continuous" or "binary"

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.start, self.start + self.size)

    def __getitem__(self, i):
        if isinstance(i, (int, np.integer)):
            if not 0 <= i < self.size:
                raise IndexError(f"{self.name}[{i}] out of range")
            return self.start + int(i)
        return self.indices[i]


@dataclass(frozen=True)
class BinaryGroup:
    """Binaries with a shared role in the search.

    kind ``candidate``: one binary per specification (``spec`` set).
    kind ``select``: a one-hot block choosing the maximum of ``values``.
    kind ``clamp``: a single binary that is 1 when ``expr`` is positive, where
    ``expr`` is ``(indices, coefficients, constant)``.
    """

    kind: str
    variables: tuple[int, ...]
    spec: Optional[int] = None
    values: tuple[int, ...] = ()
    expr: Optional[tuple[tuple[int, ...], tuple[float, ...], float]] = None
    label: str = ""


@dataclass
class SynthesisProgram:
    """Variables, sparse linear rows and the entropy terms ``nu``.

    Rows are stored as ``A_eq z = b_eq`` and ``A_ub z <= b_ub``; ``>=`` rows are
    negated on entry.
    """

    blocks: dict = field(default_factory=dict)
    lb: list = field(default_factory=list)
    ub: list = field(default_factory=list)
    kinds: list = field(default_factory=list)
    entropy_terms: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    groups: list = field(default_factory=list)
    alpha: Optional[np.ndarray] = None
    _eq: list = field(default_factory=list)
    _ub: list = field(default_factory=list)
    _row_tags: dict = field(default_factory=lambda: {"eq": [], "ub": []})
    _compiled: Optional[tuple] = None

    # -- construction -----------------------------------------------------
    @property
    def n_vars(self) -> int:
        return len(self.lb)

    def add_block(self, name: str, size: int, kind: str = "continuous", lb=0.0, ub=np.inf) -> VarBlock:
        if name in self.blocks:
            raise ValueError(f"variable block {name!r} already registered")
        if kind not in ("continuous", "binary"):
            raise ValueError(kind)
        block = VarBlock(name, self.n_vars, int(size), kind)
        self.blocks[name] = block
        lb = np.broadcast_to(np.asarray(lb, float), (size,))
        ub = np.broadcast_to(np.asarray(ub, float), (size,))
        if kind == "binary":
            lb, ub = np.maximum(lb, 0.0), np.minimum(ub, 1.0)
        self.lb.extend(lb.tolist())
        self.ub.extend(ub.tolist())
        self.kinds.extend([kind] * size)
        self._compiled = None
        return block

    def fix(self, index: int, value: float):
        self.lb[index] = self.ub[index] = float(value)
        self._compiled = None

    def add_row(self, indices: Sequence[int], coefs: Sequence[float], sense: str, rhs: float, tag: str = ""):
        mat = sparse.csr_matrix((np.asarray(coefs, float), (np.zeros(len(indices), int), np.asarray(indices, int))),
                                shape=(1, self.n_vars))
        self.add_rows(mat, sense, [rhs], tag)

    def add_rows(self, mat, sense: str, rhs, tag: str = ""):
        mat = sparse.csr_matrix(mat)
        rhs = np.asarray(rhs, float).reshape(-1)
        if mat.shape[0] != rhs.size:
            raise ValueError("row count and right-hand side length differ")
        if mat.shape[1] > self.n_vars:
            raise ValueError("row references an unregistered variable")
        if mat.shape[1] < self.n_vars:
            mat = sparse.csr_matrix((mat.data, mat.indices, mat.indptr), shape=(mat.shape[0], self.n_vars))
        if sense == "==":
            self._eq.append((mat, rhs))
            self._row_tags["eq"].extend([tag] * rhs.size)
        elif sense == "<=":
            self._ub.append((mat, rhs))
            self._row_tags["ub"].extend([tag] * rhs.size)
        elif sense == ">=":
            self._ub.append((-mat, -rhs))
            self._row_tags["ub"].extend([tag] * rhs.size)
        else:
            raise ValueError(f"unknown sense {sense!r}")
        self._compiled = None

    def set_entropy_terms(self, indices):
        indices = np.asarray(indices, dtype=int)
        if indices.size < 1:
            raise ValueError("at least one entropy term is required")
        self.entropy_terms = indices

    def add_group(self, group: BinaryGroup):
        for v in group.variables:
            if self.kinds[v] != "binary":
                raise ValueError(f"variable {v} in group {group.label!r} is not binary")
        self.groups.append(group)

    # -- compiled views ---------------------------------------------------
    def compiled(self):
        if self._compiled is None:
            n = self.n_vars

            def stack(parts):
                if not parts:
                    return sparse.csr_matrix((0, n)), np.zeros(0)
                mats = [sparse.csr_matrix((m.data, m.indices, m.indptr), shape=(m.shape[0], n)) for m, _ in parts]
                return sparse.vstack(mats).tocsr(), np.concatenate([r for _, r in parts])

            A_eq, b_eq = stack(self._eq)
            A_ub, b_ub = stack(self._ub)
            self._compiled = (A_eq, b_eq, A_ub, b_ub)
        return self._compiled

    @property
    def binary_indices(self) -> np.ndarray:
        return np.array([i for i, k in enumerate(self.kinds) if k == "binary"], dtype=int)

    @property
    def free_binaries(self) -> np.ndarray:
        b = self.binary_indices
        return b[np.asarray(self.lb)[b] != np.asarray(self.ub)[b]] if b.size else b

    def counts(self) -> dict:
        A_eq, _, A_ub, _ = self.compiled()
        return {
            "continuous": self.n_vars - self.binary_indices.size,
            "binary": int(self.binary_indices.size),
            "free_binary": int(self.free_binaries.size),
            "rows_eq": int(A_eq.shape[0]),
            "rows_ub": int(A_ub.shape[0]),
        }

    def bounds_with(self, assignment: dict) -> tuple[np.ndarray, np.ndarray]:
        """Variable bounds with the given binaries fixed; other binaries relaxed to [0, 1]."""
        lb, ub = np.array(self.lb), np.array(self.ub)
        for idx, val in assignment.items():
            lb[idx] = ub[idx] = val
        return lb, ub

    def nu(self, z) -> np.ndarray:
        return np.asarray(z)[self.entropy_terms]

    # -- verification -----------------------------------------------------
    def residuals(self, z) -> dict:
        z = np.asarray(z, float)
        A_eq, b_eq, A_ub, b_ub = self.compiled()
        lb, ub = np.array(self.lb), np.array(self.ub)
        eq = np.abs(A_eq @ z - b_eq)
        ineq = np.maximum(A_ub @ z - b_ub, 0.0)
        bnd = np.maximum(np.maximum(lb - z, z - ub), 0.0)
        b = self.binary_indices
        integ = np.abs(z[b] - np.round(z[b])) if b.size else np.zeros(0)
        return {
            "eq": float(eq.max(initial=0.0)),
            "ub": float(ineq.max(initial=0.0)),
            "bounds": float(bnd.max(initial=0.0)),
            "integrality": float(integ.max(initial=0.0)),
        }

    def verify(self, z, theta: float, tol: float = 1e-6) -> tuple[bool, dict]:
        """Check a witness of the level-``theta`` feasibility problem."""
        res = self.residuals(z)
        nu = self.nu(z)
        res["entropy_gap"] = float(entropy_gap(nu, theta))
        ok = all(v <= tol for k, v in res.items() if k != "entropy_gap") and res["entropy_gap"] >= -tol
        return ok, res

    # -- interchange ------------------------------------------------------
    def to_dict(self, theta: Optional[float] = None) -> dict:
        """Plain-data export for external mixed-integer solvers.

        Fields: ``variables`` (name, kind, lb, ub per column, ``inf`` as null),
        ``equalities`` / ``inequalities`` as COO triplets with ``rhs`` where
        inequality rows read ``A z <= rhs``, ``entropy_terms`` (column indices
        of nu), ``binary_groups`` and the level ``theta``. The feasibility
        question is: find binary-integral z meeting every row with
        ``f1(nu) >= theta * f2(nu)`` where ``f1(nu) = -sum nu_i log2(nu_i / sum nu)``
        and ``f2(nu) = sum nu``.
        """
        A_eq, b_eq, A_ub, b_ub = self.compiled()
        names = [None] * self.n_vars
        for blk in self.blocks.values():
            for k in range(blk.size):
                names[blk.start + k] = f"{blk.name}[{k}]"

        def num(v):
            return None if not np.isfinite(v) else float(v)

        def coo(m, rhs, tags):
            m = m.tocoo()
            return {"rows": m.row.tolist(), "cols": m.col.tolist(), "vals": m.data.tolist(),
                    "rhs": rhs.tolist(), "tags": list(tags)}

        return {
            "format": "specleak-program/1",
            "theta": theta,
            "variables": [{"name": names[i], "kind": self.kinds[i], "lb": num(self.lb[i]), "ub": num(self.ub[i])}
                          for i in range(self.n_vars)],
            "equalities": coo(A_eq, b_eq, self._row_tags["eq"]),
            "inequalities": coo(A_ub, b_ub, self._row_tags["ub"]),
            "entropy_terms": self.entropy_terms.tolist(),
            "binary_groups": [{"kind": g.kind, "variables": list(g.variables), "spec": g.spec,
                               "values": list(g.values), "label": g.label,
                               "expr": None if g.expr is None else
                               {"indices": list(g.expr[0]), "coefs": list(g.expr[1]), "constant": g.expr[2]}}
                              for g in self.groups],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthesisProgram":
        prog = cls()
        prev = None
        # rebuild blocks from the name prefixes, preserving column order
        for i, var in enumerate(doc["variables"]):
            base = var["name"].rsplit("[", 1)[0]
            if prev is None or prev[0] != base:
                if prev is not None:
                    prog._add_block_from(prev)
                prev = [base, var["kind"], [], []]
            prev[2].append(-np.inf if var["lb"] is None else var["lb"])
            prev[3].append(np.inf if var["ub"] is None else var["ub"])
        if prev is not None:
            prog._add_block_from(prev)
        n = prog.n_vars
        for key, sense in (("equalities", "=="), ("inequalities", "<=")):
            part = doc[key]
            m = sparse.csr_matrix((part["vals"], (part["rows"], part["cols"])), shape=(len(part["rhs"]), n))
            if m.shape[0]:
                prog.add_rows(m, sense, part["rhs"], "imported")
        prog.set_entropy_terms(doc["entropy_terms"])
        for g in doc.get("binary_groups", []):
            expr = g.get("expr")
            prog.add_group(BinaryGroup(
                g["kind"], tuple(g["variables"]), g.get("spec"), tuple(g.get("values", ())),
                None if expr is None else (tuple(expr["indices"]), tuple(expr["coefs"]), expr["constant"]),
                g.get("label", "")))
        return prog

    def _add_block_from(self, spec):
        name, kind, lbs, ubs = spec
        blk = self.add_block(name, len(lbs), kind)
        self.lb[blk.start:blk.start + blk.size] = lbs
        self.ub[blk.start:blk.start + blk.size] = ubs

    def dumps(self, theta: Optional[float] = None) -> str:
        return json.dumps(self.to_dict(theta))


# -- entropy pieces ---------------------------------------------------------

NU_FLOOR = 1e-12


def f1(nu) -> float:
    """Concave numerator ``-sum nu_i log2(nu_i / sum(nu))`` with ``0 log 0 = 0``."""
    nu = np.maximum(np.asarray(nu, float), 0.0)
    total = nu.sum()
    if total <= 0:
        return 0.0
    pos = nu > 0
    return float(-(nu[pos] * np.log2(nu[pos] / total)).sum()) + 0.0  # no negative zero


def f2(nu) -> float:
    return float(np.maximum(np.asarray(nu, float), 0.0).sum())


def entropy_bits(nu) -> float:
    """Entropy of ``nu / sum(nu)`` in bits; 0 for an all-zero vector."""
    total = f2(nu)
    return f1(nu) / total if total > 0 else 0.0


def entropy_gap(nu, theta: float) -> float:
    return f1(nu) - theta * f2(nu)


def entropy_gap_grad(nu, theta: float) -> np.ndarray:
    nu = np.maximum(np.asarray(nu, float), NU_FLOOR)
    return -np.log2(nu / nu.sum()) - theta
