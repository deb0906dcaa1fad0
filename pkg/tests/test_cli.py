import json
import math
import subprocess
import sys

import pytest
import yaml

from qglab import cli
from qglab.io import loads_document

PI2 = math.pi ** 2


def _run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _diag(err):
    d = json.loads(err.strip().splitlines()[-1])
    assert set(d) == {"error", "message", "exit_code"}
    return d


def test_spectrum_csv(capsys):
    code, out, _ = _run(capsys, "spectrum", "--graph", "builtin:interval", "--max-lambda", "100")
    assert code == 0
    rows = [l.split(",") for l in out.splitlines()[2:]]
    assert [int(r[1]) for r in rows] == [1, 1, 1, 1]
    vals = [float(r[0]) for r in rows]
    assert vals == pytest.approx([0, PI2, 4 * PI2, 9 * PI2], rel=1e-10, abs=1e-12)


def test_spectrum_from_file_and_fd(capsys, tmp_path):
    g = {"vertices": [{"id": "c"}, {"id": "a"}, {"id": "b"}, {"id": "d"}],
         "edges": [{"init": "c", "fin": x, "length": 1.0} for x in "abd"]}
    path = tmp_path / "star.yaml"
    path.write_text(yaml.safe_dump(g))
    code, out, _ = _run(capsys, "spectrum", "--graph", str(path), "--max-lambda", "10",
                        "--method", "fd", "--n", "512", "--format", "json")
    assert code == 0
    _, s = loads_document(out)
    assert s.expanded()[1:] == pytest.approx([PI2 / 4] * 2 + [PI2], rel=1e-4)


def test_cond_override(capsys):
    code, out, _ = _run(capsys, "spectrum", "--graph", "builtin:interval", "--cond", "dirichlet",
                        "--max-lambda", "50", "--format", "json")
    _, s = loads_document(out)
    assert code == 0 and s.expanded() == pytest.approx([PI2, 4 * PI2])


def test_bands_json_gap(capsys):
    code, out, _ = _run(capsys, "bands", "--group", "Z x Z_3", "--model", "kirchhoff",
                        "--max-lambda", "120", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    sg = doc["payload"]["gaps"]["spectral_gaps"]
    assert any(g["lo"] == pytest.approx(5.8509, abs=1e-4) and g["hi"] == pytest.approx(PI2)
               for g in sg)
    assert doc["metadata"]["config"]["group"] == "Z x Z_3"
    assert "workers" not in doc["metadata"]["config"]


def test_gaps_with_theta_check(capsys):
    code, out, _ = _run(capsys, "gaps", "--group", "Z x Z_3", "--max-lambda", "50",
                        "--samples", "32", "--format", "json")
    doc = json.loads(out)
    assert code == 0 and doc["payload_type"] == "gaps"
    assert doc["extra"]["theta_check"]["in_gaps"] == 0


def test_limit_commands(capsys, tmp_path):
    code, out, _ = _run(capsys, "limit", "--graph", "builtin:interval", "--regime", "slow",
                        "--max-lambda", "50", "--format", "json")
    _, s = loads_document(out)
    assert code == 0 and s.multiplicities[0] == 2
    spec = tmp_path / "v.yaml"
    spec.write_text("a: [0, 39.48]\nb: [0, 39.48]\n")
    code, out, _ = _run(capsys, "limit", "--graph", "builtin:interval", "--regime", "nondecay",
                        "--vertex-spectra", str(spec), "--max-lambda", "50", "--format", "json")
    _, s = loads_document(out)
    assert code == 0 and len(s) == 6


def test_svg_output(capsys):
    code, out, _ = _run(capsys, "bands", "--group", "Z x Z_2", "--max-lambda", "100",
                        "--format", "svg")
    assert code == 0 and out.startswith("<?xml") and out.count("<rect") == 1


def test_timing_flag(capsys):
    base = ["spectrum", "--graph", "builtin:star", "--format", "json", "--max-lambda", "20"]
    _, out, _ = _run(capsys, *base)
    assert "wall_time" not in json.loads(out)["metadata"]
    _, out, _ = _run(capsys, *base, "--timing")
    assert json.loads(out)["metadata"]["wall_time"] >= 0


def test_out_file(capsys, tmp_path):
    path = tmp_path / "s.csv"
    code, out, _ = _run(capsys, "spectrum", "--graph", "builtin:loop", "--out", str(path))
    assert code == 0 and out == "" and path.read_text().startswith("# qglab.spectrum.csv/1")


@pytest.mark.parametrize("argv", [
    ["spectrum", "--graph", "builtin:star", "--tol", "1"],
    ["spectrum", "--graph", "builtin:star", "--tol", "1e-15"],
    ["spectrum", "--graph", "builtin:star", "--max-lambda", "-1"],
    ["spectrum", "--graph", "missing.yaml"],
    ["spectrum", "--graph", "builtin:nothing"],
    ["spectrum", "--graph", "builtin:star", "--format", "svg"],
    ["spectrum", "--graph", "builtin:star", "--cond", "robin"],
    ["spectrum"],
    ["bands", "--group", "Q8"],
    ["bands", "--group", "Z", "--model", "borderline", "--c", "0"],
    ["limit", "--graph", "builtin:star"],
    ["limit", "--graph", "builtin:star", "--regime", "fast", "--alpha", "0.25"],
    ["limit", "--graph", "builtin:star", "--regime", "nondecay"],
    ["manifold-converge", "--graph", "builtin:star", "--regime", "fast", "--eps", "0.1,0.2"],
    ["manifold-converge", "--graph", "builtin:star", "--regime", "fast", "--eps", "a,b"],
    ["frobnicate"],
    ["spectrum", "--graph", "builtin:star", "--workers", "0"],
])
def test_config_errors_exit_2(capsys, argv):
    code, _, err = _run(capsys, *argv)
    assert code == 2 and _diag(err)["exit_code"] == 2


def test_bad_graph_file_exit_2(capsys, tmp_path):
    path = tmp_path / "g.yaml"
    path.write_text("vertices: [{id: a}]\nedges: [{init: a, fin: b, length: 1}]\n")
    code, _, err = _run(capsys, "spectrum", "--graph", str(path))
    assert code == 2 and _diag(err)["error"] == "DanglingEndpoint"


@pytest.mark.parametrize("argv, kind", [
    (["spectrum", "--graph", "builtin:star", "--max-lambda", "1e14", "--tol", "1e-6"],
     "ScanBudgetError"),
    (["spectrum", "--graph", "builtin:star", "--method", "fd", "--n", "1000000"], "FDBudgetError"),
])
def test_budget_exit_3(capsys, argv, kind):
    code, _, err = _run(capsys, *argv)
    assert code == 3 and _diag(err)["error"] == kind


def test_certification_failure_exit_4(capsys):
    code, out, err = _run(capsys, "manifold-converge", "--graph", "builtin:star", "--regime", "fast",
                          "--eps", "0.05", "--k", "3", "--h", "0.1")
    assert code == 4 and _diag(err)["exit_code"] == 4
    assert out.startswith("# qglab.convergence.csv/1")      # the report is still written


def test_internal_error_exit_1(capsys, monkeypatch):
    def boom(cfg, pool):
        raise RuntimeError("unexpected")
    monkeypatch.setitem(cli._DISPATCH, "spectrum", boom)
    code, _, err = _run(capsys, "spectrum", "--graph", "builtin:star")
    assert code == 1 and _diag(err) == {"error": "RuntimeError", "message": "unexpected",
                                        "exit_code": 1}


def test_manifold_export(capsys, tmp_path):
    code, out, _ = _run(capsys, "manifold-converge", "--graph", "builtin:star", "--regime", "fast",
                        "--eps", "0.2", "--k", "2", "--h", "0.05", "--export", str(tmp_path / "m"))
    assert code in (0, 4)
    for name in ("stiffness.txt", "mass.txt", "nodes.txt"):
        assert (tmp_path / "m" / name).stat().st_size > 0


@pytest.mark.parametrize("argv", [
    ["gaps", "--group", "Z x Z_3", "--max-lambda", "60", "--samples", "64", "--format", "json"],
    ["manifold-converge", "--graph", "builtin:star", "--regime", "fast", "--eps", "0.2,0.1",
     "--k", "3", "--h", "0.04", "--format", "json"],
])
def test_output_independent_of_workers(capsys, argv):
    outs = []
    for w in ("1", "2"):
        code, out, _ = _run(capsys, *argv, "--workers", w, "--seed", "3")
        assert code == 0
        outs.append(out)
    assert outs[0] == outs[1]


def test_console_script_version():
    r = subprocess.run([sys.executable, "-m", "qglab.cli", "--version"], capture_output=True,
                       text=True)
    assert r.returncode == 0 and r.stdout.startswith("qglab ")
