from __future__ import annotations

import json
import subprocess
import sys

import pytest

from bvpoint.cli import main
from bvpoint.generators import grid_document, sample, sine_bump
from bvpoint.space import space_from_document
from bvpoint.variation import variation_measure


def run(capsys, *argv):
    code = main(list(map(str, argv)))
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out else None), err


def test_characterize_s2_then_audit(capsys, s2_path, tmp_path):
    cert = tmp_path / "cert.json"
    code, _, _ = run(capsys, "characterize", s2_path, "--function", "u", "--measure", "nu",
                     "--sigma", 1, "--c0", 1, "--output", cert)
    assert code == 0
    doc = json.loads(cert.read_text())
    assert doc["passed"] and doc["overall_constant"] == 1.0
    code, rep, _ = run(capsys, "audit", cert)
    assert code == 0 and rep["agrees"]


def test_audit_mutant_and_truncation(capsys, s2_path, tmp_path):
    cert = tmp_path / "cert.json"
    run(capsys, "characterize", s2_path, "--function", "u", "--measure", "nu", "--c0", 1, "-o", cert)
    doc = json.loads(cert.read_text())
    doc["traces"][0]["levels"][-1]["a"] *= 1.1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    code, rep, _ = run(capsys, "audit", bad)
    assert code == 2 and rep["mismatches"]
    bad.write_text(cert.read_text()[:100])
    code, rep, err = run(capsys, "audit", bad)
    assert code == 1 and rep is None and "JSON" in err


def test_pointwise_zero_measure(capsys, s2_path):
    code, rep, _ = run(capsys, "pointwise", s2_path, "--function", "u", "--measure", "zero", "--sigma", 1)
    assert code == 2
    assert [p["label"] for p in rep["worst_pair"]] == ["a", "b"]
    assert rep["c0_minimal"] == float("inf")


def test_pointwise_sobolev_form(capsys, s2_path):
    code, rep, _ = run(capsys, "pointwise", s2_path, "--function", "u", "--gradient", "one", "--sigma", 1, "--c0", 1)
    assert code == 0 and rep["c0_minimal"] == 1.0 and rep["p"] == 1.0


def test_missing_file(capsys):
    code, rep, err = run(capsys, "info", "missing.json")
    assert code == 1 and rep is None and "missing.json" in err


@pytest.mark.parametrize(
    "argv",
    [
        ["nonsense"],
        ["pointwise", "{s2}", "--function", "nope", "--measure", "nu"],
        ["pointwise", "{s2}", "--function", "u", "--measure", "nu", "--sigma", "0.5"],
        ["maximal", "{s2}", "--function", "u", "--measure", "nu"],
        ["maximal", "{s2}", "--function", "u", "--R", "-1"],
        ["characterize", "{s2}", "--function", "u", "--measure", "nu"],
        ["geometry", "{s2}", "--x0", "a"],
        ["info", "{s2}", "--threads", "0"],
    ],
)
def test_input_errors(capsys, s2_path, argv):
    code = main([a.replace("{s2}", str(s2_path)) for a in argv])
    assert code == 1
    assert capsys.readouterr().err


def test_info_and_maximal(capsys, s2_path):
    code, rep, _ = run(capsys, "info", s2_path)
    assert code == 0 and rep["n"] == 2 and rep["measures"] == ["nu", "spike", "zero"]
    code, rep, _ = run(capsys, "maximal", s2_path, "--measure", "spike", "--R", 2)
    assert code == 0 and rep["values"] == [3.0, 1.5] and rep["max"]["label"] == "a"


def test_doubling_and_geometry(capsys, tmp_path, s2_path):
    code, rep, _ = run(capsys, "doubling", s2_path, "--audit")
    assert code == 0 and rep["doubling_constant"] == 2.0 and rep["doubling_dimension"] == 1.0
    assert rep["dimension_audit"]["best_constant"] > 0
    path = {"name": "path", "metric": {"type": "graph", "n": 11, "edges": [[i, i + 1, 0.1] for i in range(10)]},
            "mu": [0.1] * 11}
    p = tmp_path / "path.json"
    p.write_text(json.dumps(path))
    code, rep, _ = run(capsys, "geometry", p, "--x0", 0, "--R", 0.55, "--x", 5, "--r", 0.4, "--delta", 0)
    assert code == 0 and rep["lemma"]["witness"]["members"] == ["2", "3", "4"]
    assert rep["lemma"]["small_ball"]["holds"]


def test_variation_and_upper_gradient(capsys, s2_path):
    code, rep, _ = run(capsys, "variation", s2_path, "--function", "u")
    assert code == 0 and rep["total"] == 2.0
    code, rep, _ = run(capsys, "variation", s2_path, "--function", "u", "--gradient", "one")
    assert code == 2 and rep["upper_gradient"]["witness"]["oscillation"] == 2.0


def test_poincare_command(capsys, s2_path):
    code, rep, _ = run(capsys, "poincare", s2_path, "--function", "u", "--measure", "nu", "--eta", 1)
    assert code == 0 and rep["minimal_constant"] == 1.0 and len(rep["per_ball"]) == 2
    code, rep, _ = run(capsys, "poincare", s2_path, "--function", "u", "--measure", "nu", "--c0", 0.5)
    assert code == 2 and rep["worst_ball"]["label"] == "a"
    code, rep, _ = run(capsys, "poincare", s2_path, "--function", "u", "--measure", "zero")
    assert code == 2 and rep["worst_ball"]["rhs"] == 0.0


def test_characterize_hypothesis_failure(capsys, s2_path):
    code, rep, _ = run(capsys, "characterize", s2_path, "--function", "u", "--measure", "nu", "--c0", 0.5)
    assert code == 2 and not rep["passed"]
    assert [p["label"] for p in rep["pointwise"]["worst_pair"]] == ["a", "b"]


def test_grid_threads_are_byte_identical(capsys, tmp_path):
    doc = grid_document(6)
    sp = space_from_document(doc)
    u = sample(sp, sine_bump)
    doc["functions"] = {"u": u.tolist()}
    doc["measures"] = {"nu": variation_measure(sp, u, "grid").tolist()}
    p = tmp_path / "g.json"
    p.write_text(json.dumps(doc))
    outs = []
    for threads in (1, 8):
        main(["characterize", str(p), "--function", "u", "--measure", "nu", "--sigma", "2", "--c0", "10",
              "--threads", str(threads)])
        outs.append(capsys.readouterr().out)
    assert outs[0] == outs[1]


def test_console_script_entry_point(s2_path):
    proc = subprocess.run([sys.executable, "-m", "bvpoint.cli", "info", str(s2_path)], capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["space"] == "S2"
