"""Bounded temporal-logic fragment: parsing, classification and finite-word semantics.

Supported formulas are a literal, ``F[a,b] lit``, ``G[a,b] lit``,
``F[a,b] G[c,d] lit`` and ``G[a,b] F[c,d] lit`` where ``lit`` is ``p`` or
``!p``. Windows are closed on both ends and are measured in word positions
relative to the evaluation index.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np

ATOM, EVENTUALLY, ALWAYS, EVENTUALLY_ALWAYS, ALWAYS_EVENTUALLY = "ATOM", "F", "G", "FG", "GF"
FORMS = (ATOM, EVENTUALLY, ALWAYS, EVENTUALLY_ALWAYS, ALWAYS_EVENTUALLY)


class SpecSyntaxError(ValueError):
    """Raised for malformed or unsupported formulas."""


class WordTooShort(ValueError):
    pass


@dataclass(frozen=True)
class Atom:
    prop: str
    negated: bool = False

    def holds(self, labels) -> bool:
        return (self.prop in labels) != self.negated

    def __str__(self):
        return ("!" if self.negated else "") + self.prop


@dataclass(frozen=True)
class Temporal:
    op: str  # "F" or "G"
    lo: int
    hi: int
    sub: Union["Temporal", Atom]

    def __str__(self):
        return f"{self.op}[{self.lo},{self.hi}] {self.sub}"


Node = Union[Atom, Temporal]


def _param_set(node: Node) -> frozenset[int]:
    if isinstance(node, Atom):
        return frozenset({0})
    inner = _param_set(node.sub)
    return frozenset(b + x for b in (node.lo, node.hi) for x in inner)


@dataclass(frozen=True)
class SpecFormula:
    ast: Node
    text: str = field(compare=False)

    @property
    def param_set(self) -> frozenset[int]:
        return _param_set(self.ast)

    @property
    def horizon(self) -> int:
        return max(self.param_set)

    @property
    def form(self) -> str:
        return classify(self)

    @property
    def literal(self) -> Atom:
        node = self.ast
        while isinstance(node, Temporal):
            node = node.sub
        return node

    def windows(self) -> tuple[tuple[int, int], ...]:
        """Interval bounds from the outermost operator inwards."""
        out, node = [], self.ast
        while isinstance(node, Temporal):
            out.append((node.lo, node.hi))
            node = node.sub
        return tuple(out)

    def __str__(self):
        return str(self.ast)


_TOKEN = re.compile(r"\s*(?:(?P<op>[FG])(?=\s*\[)|(?P<lb>\[)|(?P<rb>\])|(?P<comma>,)|"
                    r"(?P<nat>\d+)|(?P<bang>!)|(?P<ident>[A-Za-z_][A-Za-z0-9_]*))")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens, pos = [], 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise SpecSyntaxError(f"unexpected character {text[pos:].strip()[:1]!r} at column {pos + 1} in {text!r}")
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else ("eof", "", len(self.text))

    def expect(self, kind: str):
        tok = self.peek()
        if tok[0] != kind:
            what = tok[1] or "end of input"
            raise SpecSyntaxError(f"expected {kind} at column {tok[2] + 1}, found {what!r} in {self.text!r}")
        self.pos += 1
        return tok

    def formula(self, depth: int = 0) -> Node:
        kind = self.peek()[0]
        if kind == "op":
            if depth >= 2:
                raise SpecSyntaxError(f"temporal nesting deeper than two operators in {self.text!r}")
            op = self.expect("op")[1]
            lo, hi = self.interval()
            return Temporal(op, lo, hi, self.formula(depth + 1))
        return self.literal()

    def interval(self) -> tuple[int, int]:
        self.expect("lb")
        lo = int(self.expect("nat")[1])
        self.expect("comma")
        hi = int(self.expect("nat")[1])
        self.expect("rb")
        if lo > hi:
            raise SpecSyntaxError(f"malformed interval [{lo},{hi}]: lower bound exceeds upper bound")
        return lo, hi

    def literal(self) -> Atom:
        negated = False
        if self.peek()[0] == "bang":
            self.pos += 1
            negated = True
        return Atom(self.expect("ident")[1], negated)


def parse_spec(text: str) -> SpecFormula:
    """Parse one formula of the supported fragment."""
    p = _Parser(text)
    node = p.formula()
    if p.peek()[0] != "eof":
        tok = p.peek()
        raise SpecSyntaxError(f"trailing input {tok[1]!r} at column {tok[2] + 1} in {text!r}")
    spec = SpecFormula(node, text.strip())
    classify(spec)
    return spec


def classify(formula: SpecFormula) -> str:
    node = formula.ast
    if isinstance(node, Atom):
        return ATOM
    if isinstance(node.sub, Atom):
        return node.op
    if isinstance(node.sub, Temporal) and isinstance(node.sub.sub, Atom) and node.op != node.sub.op:
        return node.op + node.sub.op
    raise SpecSyntaxError(f"{formula.text!r} is outside the supported fragment")


def _holds(node: Node, word: Sequence, k: int) -> bool:
    if isinstance(node, Atom):
        return node.holds(word[k])
    window = range(k + node.lo, k + node.hi + 1)
    if node.op == "F":
        return any(_holds(node.sub, word, j) for j in window)
    return all(_holds(node.sub, word, j) for j in window)


def evaluate(word: Sequence, formula: SpecFormula, k: int = 0) -> bool:
    """Decide ``(word, k) |= formula``; ``word[j]`` is the label set at position j."""
    if len(word) <= k + formula.horizon:
        raise WordTooShort(
            f"deciding {formula.text!r} at index {k} needs {k + formula.horizon + 1} symbols, got {len(word)}")
    return _holds(formula.ast, word, k)


def evaluate_batch(formula: SpecFormula, truth: Mapping[str, np.ndarray]) -> np.ndarray:
    """Vectorised verdicts at index 0 for many words at once.

    ``truth[p]`` is a boolean array of shape (n_words, length) telling whether
    ``p`` holds at each position.
    """

    def table(node: Node) -> np.ndarray:
        if isinstance(node, Atom):
            arr = np.asarray(truth[node.prop], dtype=bool)
            return ~arr if node.negated else arr
        sub = table(node.sub).astype(np.int32)
        width = sub.shape[1] - node.hi
        if width <= 0:
            raise WordTooShort(f"words too short for {formula.text!r}")
        csum = np.concatenate([np.zeros((sub.shape[0], 1), np.int32), np.cumsum(sub, axis=1)], axis=1)
        k = np.arange(width)
        count = csum[:, k + node.hi + 1] - csum[:, k + node.lo]
        if node.op == "F":
            return count > 0
        return count == node.hi - node.lo + 1

    return table(formula.ast)[:, 0]


@dataclass(frozen=True)
class ProblemInstance:
    """Candidate specifications plus the secret one (0-based ``ground_truth``)."""

    specs: tuple[SpecFormula, ...]
    ground_truth: int
    gamma: float
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "specs", tuple(self.specs))
        if not self.specs:
            raise ValueError("at least one specification is required")
        if not 0 <= self.ground_truth < len(self.specs):
            raise ValueError(f"ground-truth index {self.ground_truth} out of range")
        if not 0 < self.beta < 1:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if not 0 < self.gamma <= 1:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.gamma < self.beta:
            raise ValueError(f"gamma ({self.gamma}) must be at least beta ({self.beta})")

    @property
    def n_specs(self) -> int:
        return len(self.specs)

    @property
    def horizon(self) -> int:
        return max(s.horizon for s in self.specs)


def parse_specs_file(text: str) -> tuple[list[SpecFormula], int]:
    """Parse a specs document; the ground truth line starts with ``*``."""
    specs, truth = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        starred = line.startswith("*")
        if starred:
            line = line[1:].strip()
        try:
            specs.append(parse_spec(line))
        except SpecSyntaxError as exc:
            raise SpecSyntaxError(f"line {lineno}: {exc}") from exc
        if starred:
            truth.append(len(specs) - 1)
    if not specs:
        raise SpecSyntaxError("specs file contains no formulas")
    if len(truth) != 1:
        raise SpecSyntaxError(f"exactly one formula must be marked with '*', found {len(truth)}")
    return specs, truth[0]


def load_instance(path, gamma: float, beta: float) -> ProblemInstance:
    specs, truth = parse_specs_file(Path(path).read_text(encoding="utf-8"))
    return ProblemInstance(tuple(specs), truth, gamma, beta)
