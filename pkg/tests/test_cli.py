import csv
import json

import numpy as np

from lppdwg import __version__
from lppdwg.cli import main


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_solve_writes_outputs(tmp_path):
    assert run(tmp_path, "solve", "--problem", "t4", "--base-n", "4", "--levels", "1",
               "--emit", "csv,json,fields", "--fields-res", "4") == 0
    for name in ("u_coeffs.csv", "lambda_coeffs.csv", "iterations.csv", "fields.csv", "report.json"):
        assert (tmp_path / name).exists()
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["version"] == __version__ and rep["config"]["problem"] == "t4"
    assert rep["iteration_log"]["status"] == "Converged"
    assert rep["solver"]["k"] == 2 and rep["solver"]["j"] == 1
    rows = read_csv(tmp_path / "u_coeffs.csv")
    assert rows[0] == ["index", "value"] and len(rows) - 1 == rep["dofs"]["u"]
    float(rows[1][1])
    assert "e" in rows[1][1]


def test_config_errors(tmp_path):
    assert run(tmp_path, "solve", "--problem", "t1", "--k", "1", "--j", "2") == 2
    assert run(tmp_path, "solve", "--problem", "nope") == 2
    assert run(tmp_path, "solve", "--p", "1.0") == 2
    assert run(tmp_path, "convergence", "--problem", "f1") == 2
    assert run(tmp_path, "solve", "--problem", "t5", "--base-n", "3") == 2
    assert run(tmp_path, "solve", "--emit", "xml") == 2


def test_no_convergence_code(tmp_path):
    assert run(tmp_path, "solve", "--problem", "t4", "--p", "3", "--rho", "1e4",
               "--base-n", "4", "--levels", "1", "--max-iters", "1") == 3


def test_config_file_and_override(tmp_path):
    cfgfile = tmp_path / "run.json"
    cfgfile.write_text(json.dumps({"problem": "t2", "p": 1.5, "base_n": 4, "levels": 1, "tau": 1.0}))
    assert run(tmp_path, "solve", "--config", str(cfgfile), "--p", "2") == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["config"]["p"] == 2.0 and rep["config"]["problem"] == "t2"
    assert rep["solver"]["k"] == 1 and rep["solver"]["tau"] == 1.0
    cfgfile.write_text(json.dumps({"bogus": 1}))
    assert run(tmp_path, "solve", "--config", str(cfgfile)) == 2


def test_convergence_table(tmp_path):
    assert run(tmp_path, "convergence", "--problem", "t4", "--base-n", "4", "--levels", "2") == 0
    rows = read_csv(tmp_path / "convergence.csv")
    assert rows[0] == ["inv_h", "e_h_0q", "rate", "eps0_0p", "rate", "epsb_0p", "rate",
                       "eps0_1p", "rate"]
    assert rows[1][0] == "4" and rows[1][2] == "" and rows[2][0] == "8"
    assert float(rows[2][2]) > 1.5
    payload = json.loads((tmp_path / "convergence.json").read_text())
    assert len(payload["levels"]) == 2 and payload["worst_conservation_residual"] < 1e-10


def test_single_level_has_empty_rates(tmp_path):
    assert run(tmp_path, "convergence", "--problem", "t3", "--base-n", "4", "--levels", "1") == 0
    rows = read_csv(tmp_path / "convergence.csv")
    assert "eps0_2p" in rows[0] and len(rows) == 2
    assert all(rows[1][i] == "" for i in range(2, len(rows[0]), 2))


def test_fields_grid(tmp_path):
    assert run(tmp_path, "fields", "--problem", "t4", "--base-n", "4", "--levels", "1",
               "--fields-res", "1") == 0
    rows = read_csv(tmp_path / "fields.csv")
    assert rows[0] == ["x", "y", "u_h", "lambda0"]
    pts = {(float(r[0]), float(r[1])) for r in rows[1:]}
    assert pts == {(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)}


def test_fields_skip_lshape_notch(tmp_path):
    assert run(tmp_path, "fields", "--problem", "f4", "--base-n", "4", "--levels", "1",
               "--fields-res", "8") == 0
    xy = np.array([[float(v) for v in r[:2]] for r in read_csv(tmp_path / "fields.csv")[1:]])
    assert len(xy) > 0
    assert not np.any((xy[:, 0] > 0.5 + 1e-9) & (xy[:, 1] < 0.5 - 1e-9))


def test_outputs_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["solve", "--problem", "t4", "--p", "1.5", "--base-n", "4", "--levels", "1",
                     "--out", str(d)]) == 0
    for name in ("u_coeffs.csv", "lambda_coeffs.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_dump_mesh(tmp_path):
    assert run(tmp_path, "solve", "--base-n", "2", "--levels", "1", "--dump-mesh") == 0
    assert any((tmp_path / "mesh").iterdir())
