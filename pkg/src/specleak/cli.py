"""Command-line interface: synth, simulate, check, export-program, eval-exact.

Exit codes: 0 success, 2 input error, 3 infeasible specification, 4 inconclusive solver.
"""

from __future__ import annotations

import json
import logging
import os
import sys
import time
from pathlib import Path

import click

from . import assets
from .automata import AlphabetMismatch
from .evaluation import IncompatiblePolicy, exact_report, simulate, synthesis_report
from .model import ModelError, load_model
from .optcore import (BackendError, ExternalBackend, FeasibilitySearch, InfeasibleSpecification, SearchSettings,
                      SolverInconclusive, load_witness, verify_witness)
from .policy import PolicyError, load_policy
from .speclang import SpecSyntaxError, load_instance

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_INCONCLUSIVE = 0, 2, 3, 4
THREADS_ENV = "SPECLEAK_THREADS"

INPUT_ERRORS = (ModelError, SpecSyntaxError, PolicyError, AlphabetMismatch, IncompatiblePolicy, BackendError,
                FileNotFoundError, IsADirectoryError, UnicodeDecodeError, json.JSONDecodeError, ValueError)


class Failure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _resolve(path: str, kind: str) -> Path:
    """A file path, or the name of a bundled asset when no such file exists."""
    p = Path(path)
    if p.exists():
        return p
    if os.sep not in path and assets.asset_path(path).exists():
        return assets.asset_path(path)
    raise Failure(EXIT_INPUT, f"{kind} file not found: {path}")


def _inputs(model, specs, instance, gamma, beta):
    if instance:
        if instance not in assets.INSTANCES:
            raise Failure(EXIT_INPUT, f"unknown bundled instance {instance!r}; choose from {sorted(assets.INSTANCES)}")
        model = model or assets.INSTANCES[instance][0]
        specs = specs or assets.INSTANCES[instance][1]
    if not model or not specs:
        raise Failure(EXIT_INPUT, "both --model and --specs (or --instance) are required")
    mdp = load_model(_resolve(model, "model"))
    inst = load_instance(_resolve(specs, "specs"), gamma, beta)
    return mdp, inst


def _settings(threads: int) -> SearchSettings:
    return SearchSettings(threads=max(1, threads))


def _backend(spec: str, settings: SearchSettings):
    if spec == "builtin":
        return None
    if spec.startswith("external:"):
        cmd = spec[len("external:"):]
        if not cmd:
            raise Failure(EXIT_INPUT, "--backend external:<path> needs a path")
        return lambda program: ExternalBackend(program, cmd, settings)
    raise Failure(EXIT_INPUT, f"unknown backend {spec!r}")


def _write(path, text: str):
    if path:
        Path(path).write_text(text, encoding="utf-8")


def _program(method, mdp, inst):
    if method == "exact":
        from .synth_exact import assemble_exact_program, build_product
        return assemble_exact_program(build_product(mdp, inst), inst)[0]
    from .synth_approx import assemble_approx_program, build_stage_product
    return assemble_approx_program(build_stage_product(mdp, inst), inst)[0]


def summary_table(report: dict, counts: dict, seconds: float, name: str) -> str:
    gt = next(r for r in report["specs"] if r["ground_truth"])
    head = ("instance", "method", "continuous", "binary", "time[s]", "Pr(gt) comp.", "Pr(gt) actual", "entropy",
            "|candidates|")
    row = (name, report["method"], str(counts["continuous"]), str(counts["binary"]), f"{seconds:.2f}",
           f"{gt['computed']:.3f}", f"{gt['actual']:.3f}", f"{report['entropy_bits']:.3f}",
           str(len(report["candidates"])))
    widths = [max(len(a), len(b)) for a, b in zip(head, row)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(head, widths)), "  ".join(c.ljust(w) for c, w in zip(row, widths))]
    lines.append("")
    lines.append("spec".ljust(28) + "  mu        actual    x")
    for r in report["specs"]:
        mark = "*" if r["ground_truth"] else " "
        lines.append(f"{mark}{r['name']:<27}  {r['computed']:.6f}  {r['actual']:.6f}  {r['x']}")
    return "\n".join(lines)


common = [
    click.option("--model", help="Model JSON file (or the name of a bundled model)."),
    click.option("--specs", help="Specification file (or the name of a bundled one)."),
    click.option("--instance", help="Bundled instance: resupply-1, resupply-2 or surveillance."),
    click.option("--gamma", type=float, default=0.95, show_default=True, help="Required ground-truth probability."),
    click.option("--beta", type=float, default=0.8, show_default=True, help="Candidate threshold."),
]


def with_common(f):
    for opt in reversed(common):
        f = opt(f)
    return f


def default_threads() -> int:
    try:
        return int(os.environ.get(THREADS_ENV, "1"))
    except ValueError:
        return 1


@click.group()
@click.option("-v", "--verbose", count=True, help="Log progress (repeat for more detail).")
def cli(verbose):
    """Policy synthesis that hides a ground-truth task among candidate specifications."""
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@cli.command()
@with_common
@click.option("--method", type=click.Choice(["exact", "approx"]), default="exact", show_default=True)
@click.option("--epsilon", type=float, default=1e-4, show_default=True, help="Bisection tolerance.")
@click.option("--threads", type=int, default=default_threads, help=f"Worker threads (default from {THREADS_ENV}).")
@click.option("--backend", default="builtin", show_default=True, help="builtin or external:<path>.")
@click.option("--report", "report_path", type=click.Path(dir_okay=False), help="Write the JSON report here.")
@click.option("--policy", "policy_path", type=click.Path(dir_okay=False), help="Write the policy here.")
@click.option("--tsv", "tsv_path", type=click.Path(dir_okay=False), help="Write a flat per-spec table here.")
@click.option("--export", "export_path", type=click.Path(dir_okay=False),
              help="Write the synthesis program (at the final level) here.")
@click.option("--trials", type=int, default=0, help="Also replay the policy this many times.")
@click.option("--seed", type=int, default=0, show_default=True)
def synth(model, specs, instance, gamma, beta, method, epsilon, threads, backend, report_path, policy_path, tsv_path,
          export_path, trials, seed):
    """Synthesize a policy and report satisfaction, candidates and entropy."""
    if epsilon <= 0:
        raise Failure(EXIT_INPUT, "--epsilon must be positive")
    mdp, inst = _inputs(model, specs, instance, gamma, beta)
    settings = _settings(threads)
    factory = _backend(backend, settings)
    if method == "exact":
        from .synth_exact import synthesize_exact as run
    else:
        from .synth_approx import synthesize_approx as run
    t0 = time.perf_counter()
    result = run(mdp, inst, epsilon, settings, backend=factory)
    seconds = time.perf_counter() - t0
    report = synthesis_report(result, mdp, beta)
    report["epsilon"] = epsilon
    report["gamma"] = gamma
    if trials > 0:
        sim = simulate(mdp, result.policy, inst.specs, trials, seed, beta, threads)
        report["simulation"] = {"seed": seed, **sim.to_dict()}
    text = json.dumps(report, indent=1, sort_keys=True) + "\n"
    _write(report_path, text)
    _write(policy_path, result.policy.dumps([str(s) for s in inst.specs]) + "\n")
    if tsv_path:
        rep = exact_report(mdp, result.policy, inst.specs, beta)
        rep.computed_bounds = result.mu
        _write(tsv_path, rep.to_tsv())
    if export_path:
        _write(export_path, result.program.dumps(result.theta) + "\n")
    click.echo(summary_table(report, result.program.counts(), seconds, instance or Path(specs).stem))


@cli.command("simulate")
@with_common
@click.option("--policy", "policy_path", required=True, type=click.Path(dir_okay=False))
@click.option("--trials", type=int, default=100000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--threads", type=int, default=default_threads)
@click.option("--report", "report_path", type=click.Path(dir_okay=False))
@click.option("--tsv", "tsv_path", type=click.Path(dir_okay=False))
def simulate_cmd(model, specs, instance, gamma, beta, policy_path, trials, seed, threads, report_path, tsv_path):
    """Monte Carlo replay of a stored policy."""
    if trials < 1:
        raise Failure(EXIT_INPUT, "--trials must be at least 1")
    mdp, inst = _inputs(model, specs, instance, gamma, beta)
    policy = load_policy(_resolve(policy_path, "policy"), mdp)
    rep = simulate(mdp, policy, inst.specs, trials, seed, beta, max(1, threads))
    rep.exact_probs = exact_report(mdp, policy, inst.specs, beta).exact_probs
    doc = {"seed": seed, **rep.to_dict()}
    text = json.dumps(doc, indent=1, sort_keys=True) + "\n"
    _write(report_path, text)
    _write(tsv_path, rep.to_tsv())
    if not report_path:
        click.echo(text, nl=False)


@cli.command("eval-exact")
@with_common
@click.option("--policy", "policy_path", required=True, type=click.Path(dir_okay=False))
@click.option("--report", "report_path", type=click.Path(dir_okay=False))
@click.option("--tsv", "tsv_path", type=click.Path(dir_okay=False))
def eval_exact(model, specs, instance, gamma, beta, policy_path, report_path, tsv_path):
    """Exact satisfaction probabilities and entropy of a stored policy."""
    mdp, inst = _inputs(model, specs, instance, gamma, beta)
    policy = load_policy(_resolve(policy_path, "policy"), mdp)
    rep = exact_report(mdp, policy, inst.specs, beta)
    text = rep.to_json()
    _write(report_path, text)
    _write(tsv_path, rep.to_tsv())
    if not report_path:
        click.echo(text, nl=False)


@cli.command("export-program")
@with_common
@click.option("--method", type=click.Choice(["exact", "approx"]), default="exact", show_default=True)
@click.option("--theta", type=float, default=None, help="Entropy level recorded in the export.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def export_program(model, specs, instance, gamma, beta, method, theta, out_path):
    """Write the mixed-binary program for an external solver."""
    mdp, inst = _inputs(model, specs, instance, gamma, beta)
    program = _program(method, mdp, inst)
    _write(out_path, program.dumps(theta) + "\n")
    counts = program.counts()
    click.echo(" ".join(f"{k}={v}" for k, v in counts.items()))


@cli.command()
@with_common
@click.option("--method", type=click.Choice(["exact", "approx"]), default="exact", show_default=True)
@click.option("--theta", type=float, required=True, help="Entropy level to test.")
@click.option("--witness", "witness_path", type=click.Path(dir_okay=False),
              help="Verify this witness instead of searching.")
@click.option("--threads", type=int, default=default_threads)
def check(model, specs, instance, gamma, beta, method, theta, witness_path, threads):
    """Decide feasibility at one entropy level, or verify an external witness."""
    mdp, inst = _inputs(model, specs, instance, gamma, beta)
    program = _program(method, mdp, inst)
    if witness_path:
        ok, res = verify_witness(program, load_witness(_resolve(witness_path, "witness")), theta)
        click.echo(json.dumps({"valid": ok, **res}, sort_keys=True))
        if not ok:
            raise Failure(EXIT_INFEASIBLE, "witness does not satisfy the program")
        return
    res = FeasibilitySearch(program, _settings(threads)).check(theta)
    out = {"theta": theta, "feasible": res.feasible, "certified": res.certified, "inconclusive": res.inconclusive}
    if res.feasible:
        out["entropy_bits"] = res.diagnostics.get("entropy")
        out["nu"] = [float(v) for v in program.nu(res.point)]
    click.echo(json.dumps(out, sort_keys=True))
    if res.inconclusive:
        raise Failure(EXIT_INCONCLUSIVE, "feasibility could not be decided")
    if not res.feasible:
        raise Failure(EXIT_INFEASIBLE, f"infeasible at level {theta}")


def main(argv=None) -> int:
    """Entry point; returns the exit status instead of raising."""
    try:
        cli.main(args=argv, prog_name="specleak", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return EXIT_INPUT
    except click.exceptions.Abort:
        return EXIT_INPUT
    except Failure as exc:
        click.echo(f"error: {exc}", err=True)
        return exc.code
    except InfeasibleSpecification as exc:
        click.echo(f"infeasible specification: {exc}", err=True)
        return EXIT_INFEASIBLE
    except SolverInconclusive as exc:
        click.echo(f"solver inconclusive: {exc}", err=True)
        return EXIT_INCONCLUSIVE
    except INPUT_ERRORS as exc:
        click.echo(f"input error: {exc}", err=True)
        return EXIT_INPUT
    return EXIT_OK


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
