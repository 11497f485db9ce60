import json
import subprocess
import sys

import numpy as np
import pytest

from uhlmann_kit import cli
from uhlmann_kit.serialize import decode_matrix, encode_matrix


def run_json(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, (json.loads(out) if code == 0 else None), err


def test_classify_classical(capsys):
    code, rep, _ = run_json(capsys, "classify", "--zoo", "classical_simplex", "--loops", "2")
    assert code == 0
    assert rep["result"]["verdict"] == "quasi_classical"
    assert rep["result"]["theorem2"]["all_consistent"]
    assert rep["result"]["loop_checks"]["max_rpf_distance"] <= 1e-6
    assert rep["config"]["zoo"] == "classical_simplex"
    assert rep["version"] == "0.1.0"


def test_classify_bloch(capsys):
    code, rep, _ = run_json(capsys, "classify", "--zoo", "bloch_full", "--grid", "3", "--loops", "1",
                            "--steps", "64")
    assert code == 0
    assert rep["result"]["verdict"] == "not_locally_quasi_classical"


def test_fisher_bloch_center(capsys):
    code, rep, _ = run_json(capsys, "fisher", "--zoo", "bloch_full", "--theta", "0,0,0")
    assert code == 0
    fisher = decode_matrix(rep["result"]["fisher"], "fisher")
    np.testing.assert_allclose(fisher, np.eye(3), atol=1e-12)
    f12 = decode_matrix(rep["result"]["curvature"][0]["F"], "F")
    np.testing.assert_allclose(f12, -1j * np.diag([1, -1]), atol=1e-6)


def test_holonomy_classical_path(capsys):
    code, rep, _ = run_json(capsys, "holonomy", "--zoo", "classical_simplex", "--path", "0.2,0.8,0.2")
    assert code == 0
    assert rep["result"]["closed"]
    assert rep["result"]["rpf_distance_from_identity"] <= 1e-6


def test_holonomy_bloch_loop(capsys):
    path = "0.5,0,0;0,0.5,0;-0.5,0,0;0,-0.5,0;0.5,0,0"
    code, rep, _ = run_json(capsys, "holonomy", "--zoo", "bloch_full", f"--path={path}", "--steps", "128")
    assert code == 0
    assert rep["result"]["rpf_distance_from_identity"] > 0.01


def test_estimate_classical(capsys, tmp_path):
    counts = tmp_path / "counts.csv"
    code, rep, _ = run_json(capsys, "estimate", "--zoo", "classical_simplex", "--theta", "0.3",
                            "--samples", "100000", "--seed", "7", "--counts", str(counts))
    assert code == 0
    assert rep["result"]["max_cov_z_score"] <= 5
    assert counts.read_text().startswith("outcome,count\n")
    total = sum(int(line.split(",")[1]) for line in counts.read_text().splitlines()[1:])
    assert total == 100000


def test_estimate_adaptive(capsys):
    code, rep, _ = run_json(capsys, "estimate", "--zoo", "classical_simplex", "--theta", "0.3",
                            "--samples", "20000", "--adaptive-init", "0.5")
    assert code == 0
    assert abs(rep["result"]["adaptive"]["estimate"][0] - 0.3) <= 4 * np.sqrt(0.21 / 20000)


def test_zoo_param(capsys):
    code, rep, _ = run_json(capsys, "fisher", "--zoo", "classical_simplex", "--param", "n=3",
                            "--theta", "0.2,0.3")
    assert code == 0
    assert rep["model"]["m"] == 2


def test_zoo_listing(capsys):
    code, rep, _ = run_json(capsys, "zoo")
    assert code == 0
    names = {m["name"] for m in rep["result"]["models"]}
    assert {"bloch_full", "bloch_equator2", "classical_simplex", "parallel_exp", "user_file"} <= names


def test_non_psd_model_file(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"kind": "parallel_exp", "generators": [encode_matrix(np.diag([1.0, -1.0]))],
                               "base_state": encode_matrix(np.diag([1.2, -0.2]))}))
    code, _, err = run_json(capsys, "fisher", "--model", str(bad), "--theta", "0.1")
    assert code == 2
    assert "positivity_floor" in err


def test_domain_error_exit(capsys):
    code, _, err = run_json(capsys, "fisher", "--zoo", "bloch_full", "--theta", "1.5,0,0")
    assert code == 3
    assert "radius" in err


def test_non_commuting_exit(capsys):
    code, _, err = run_json(capsys, "estimate", "--zoo", "bloch_full", "--theta", "0.1,0,0",
                            "--samples", "100")
    assert code == 5


def test_missing_theta(capsys):
    code, _, err = run_json(capsys, "fisher", "--zoo", "bloch_full")
    assert code == 2 and "--theta" in err


def test_out_file_byte_identical(tmp_path):
    out = tmp_path / "report.json"
    args = ["estimate", "--zoo", "parallel_exp", "--theta", "0.2", "--samples", "5000", "--seed", "3",
            "--out", str(out)]
    assert cli.main(args) == 0
    first = out.read_bytes()
    assert cli.main(args) == 0
    assert out.read_bytes() == first


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "uhlmann_kit", "zoo"], capture_output=True, text=True,
                          timeout=60)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["command"] == "zoo"


@pytest.mark.parametrize("text", ["0.1;0.2", "x"])
def test_bad_theta(capsys, text):
    code, _, _ = run_json(capsys, "fisher", "--zoo", "parallel_exp", "--theta", text)
    assert code == 2
