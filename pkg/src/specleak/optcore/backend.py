"""Plugging an external mixed-integer convex solver in place of the built-in search.

The external program is called as ``<path> <program.json>`` where the document is
:meth:`SynthesisProgram.to_dict` at the requested level ``theta``. It must print a
JSON object on stdout: ``{"feasible": true, "point": [...]}`` with a full variable
vector, ``{"feasible": false}``, or ``{"feasible": null}`` when undecided. Points
are checked against the program before they are trusted.
"""

from __future__ import annotations

import json
import os
import subprocess
import tempfile

import numpy as np

from .program import SynthesisProgram, entropy_bits
from .search import FeasibilityResult, SearchSettings


class BackendError(RuntimeError):
    pass


def load_witness(source) -> np.ndarray:
    """Witness vector from a JSON file or document (``{"point": [...]}`` or a bare list)."""
    if isinstance(source, (str, os.PathLike)) and os.path.exists(source):
        with open(source, encoding="utf-8") as fh:
            source = json.load(fh)
    if isinstance(source, dict):
        source = source.get("point")
    if source is None:
        raise BackendError("witness has no point")
    return np.asarray(source, float)


def verify_witness(program: SynthesisProgram, point, theta: float, tol: float = 1e-6) -> tuple[bool, dict]:
    z = np.asarray(point, float)
    if z.shape != (program.n_vars,):
        raise BackendError(f"witness has {z.size} entries, program has {program.n_vars} variables")
    return program.verify(z, theta, tol)


class ExternalBackend:
    """Feasibility oracle that shells out to a solver executable."""

    def __init__(self, program: SynthesisProgram, command: str, settings: SearchSettings | None = None,
                 timeout: float | None = None):
        self.program = program
        self.command = command
        self.settings = settings or SearchSettings()
        self.timeout = timeout
        self.stats = {"checks": 0, "external_calls": 0, "rejected_witnesses": 0}

    def check(self, theta: float) -> FeasibilityResult:
        self.stats["checks"] += 1
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "program.json")
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(self.program.to_dict(theta), fh)
            self.stats["external_calls"] += 1
            try:
                proc = subprocess.run([self.command, path], capture_output=True, text=True, timeout=self.timeout,
                                      check=False)
            except (OSError, subprocess.TimeoutExpired) as exc:
                raise BackendError(f"external solver failed to run: {exc}") from exc
        if proc.returncode != 0:
            raise BackendError(f"external solver exited with {proc.returncode}: {proc.stderr.strip()[:200]}")
        try:
            doc = json.loads(proc.stdout)
        except json.JSONDecodeError as exc:
            raise BackendError("external solver did not print a JSON object") from exc
        verdict = doc.get("feasible")
        if verdict is None:
            return FeasibilityResult(False, theta, certified=False, inconclusive=True)
        if not verdict:
            return FeasibilityResult(False, theta, certified=True)
        z = load_witness(doc)
        ok, res = verify_witness(self.program, z, theta, self.settings.feas_tol)
        if not ok:
            self.stats["rejected_witnesses"] += 1
            return FeasibilityResult(False, theta, certified=False, inconclusive=True, diagnostics=res)
        nu = self.program.nu(z)
        return FeasibilityResult(True, theta, z, float(res["entropy_gap"]), np.inf, {}, True, False,
                                 {"entropy": entropy_bits(nu), **res})
