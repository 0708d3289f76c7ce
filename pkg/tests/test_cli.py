import json
import stat
import sys

import pytest

from specleak.assets import asset_path
from specleak.cli import main


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_synth_exact_writes_artifacts(tmp_path, capsys):
    report, policy, tsv = tmp_path / "r.json", tmp_path / "p.json", tmp_path / "t.tsv"
    code, out, _ = run(["synth", "--method", "exact", "--model", "resupply_grid.json", "--specs", "resupply1.spec",
                        "--gamma", "0.95", "--beta", "0.8", "--epsilon", "1e-4", "--report", str(report),
                        "--policy", str(policy), "--tsv", str(tsv)], capsys)
    assert code == 0
    doc = json.loads(report.read_text())
    assert doc["entropy_bits"] == pytest.approx(1.0, abs=0.01)
    assert len(doc["candidates"]) == 2
    assert "entropy" in out.splitlines()[0] and "resupply1" in out
    assert tsv.read_text().splitlines()[0].endswith("computedBound")

    # the stored policy can be replayed and evaluated
    sim = tmp_path / "s.json"
    code, _, _ = run(["simulate", "--instance", "resupply-1", "--policy", str(policy), "--trials", "2000",
                      "--seed", "4", "--report", str(sim)], capsys)
    assert code == 0
    assert json.loads(sim.read_text())["trials"] == 2000
    code, out, _ = run(["eval-exact", "--instance", "resupply-1", "--policy", str(policy)], capsys)
    assert code == 0
    assert json.loads(out)["entropy_bits"] == pytest.approx(doc["entropy_bits"], abs=1e-6)


def test_synth_approx_reports_both_columns(tmp_path, capsys):
    report = tmp_path / "r.json"
    code, _, _ = run(["synth", "--method", "approx", "--instance", "resupply-1", "--report", str(report)], capsys)
    assert code == 0
    gt = next(r for r in json.loads(report.read_text())["specs"] if r["ground_truth"])
    assert gt["computed"] >= 0.95 - 1e-4
    assert gt["actual"] >= gt["computed"] - 1e-6


def test_reports_are_byte_identical(tmp_path, capsys):
    paths = []
    for i, threads in enumerate(("1", "3")):
        p = tmp_path / f"r{i}.json"
        code, _, _ = run(["synth", "--instance", "resupply-1", "--trials", "3000", "--seed", "7", "--threads", threads,
                          "--report", str(p)], capsys)
        assert code == 0
        paths.append(p.read_bytes())
    assert paths[0] == paths[1]


def test_missing_model_is_an_input_error(capsys):
    code, _, err = run(["synth", "--model", "nowhere.json", "--specs", "resupply1.spec"], capsys)
    assert code == 2 and "nowhere.json" in err


def test_bad_inputs(tmp_path, capsys):
    bad = tmp_path / "bad.spec"
    bad.write_text("* G[3,2] blue\n")
    assert run(["synth", "--model", "resupply_grid.json", "--specs", str(bad)], capsys)[0] == 2
    assert run(["synth", "--instance", "resupply-1", "--gamma", "0.7"], capsys)[0] == 2
    assert run(["synth", "--instance", "resupply-1", "--epsilon", "0"], capsys)[0] == 2
    assert run(["synth", "--instance", "nope"], capsys)[0] == 2
    assert run(["synth", "--instance", "resupply-1", "--backend", "magic"], capsys)[0] == 2
    assert run(["synth", "--method", "simplex"], capsys)[0] == 2


def test_certain_ground_truth_is_infeasible(capsys):
    code, _, err = run(["synth", "--instance", "resupply-1", "--gamma", "1.0"], capsys)
    assert code == 3 and "infeasible" in err


def test_check_and_export(tmp_path, capsys):
    code, out, _ = run(["check", "--instance", "resupply-1", "--theta", "0.9"], capsys)
    assert code == 0 and json.loads(out)["feasible"]
    code, out, _ = run(["check", "--instance", "resupply-1", "--theta", "1.1"], capsys)
    assert code == 3 and not json.loads(out)["feasible"]
    prog = tmp_path / "prog.json"
    code, out, _ = run(["export-program", "--instance", "resupply-1", "--method", "approx", "--theta", "0.5",
                        "--out", str(prog)], capsys)
    assert code == 0 and "free_binary" in out
    doc = json.loads(prog.read_text())
    assert doc["theta"] == 0.5 and doc["entropy_terms"]


SOLVER = """#!{python}
import json, sys
doc = json.load(open(sys.argv[1]))
print(json.dumps({{"feasible": None}} if doc["theta"] > 0.5 else {{"feasible": False}}))
"""


def test_external_backend_exit_codes(tmp_path, capsys):
    script = tmp_path / "solver.py"
    script.write_text(SOLVER.format(python=sys.executable))
    script.chmod(script.stat().st_mode | stat.S_IEXEC)
    code, _, err = run(["synth", "--instance", "resupply-1", "--backend", f"external:{script}"], capsys)
    assert code == 3  # level 0 reported infeasible
    script.write_text(SOLVER.format(python=sys.executable).replace("> 0.5", ">= 0.0"))
    code, _, err = run(["synth", "--instance", "resupply-1", "--backend", f"external:{script}"], capsys)
    assert code == 4 and "inconclusive" in err


def test_witness_verification(tmp_path, capsys):
    witness = tmp_path / "w.json"
    witness.write_text(json.dumps({"point": [0.0, 1.0]}))
    code, _, err = run(["check", "--instance", "resupply-1", "--theta", "0.0", "--witness", str(witness)], capsys)
    assert code == 2 and "entries" in err


def test_bundled_assets_exist():
    for name in ("resupply_grid.json", "surveillance.json", "resupply1.spec", "resupply2.spec", "surveillance.spec"):
        assert asset_path(name).exists()
