import io
import json
import subprocess
import sys

import numpy as np
import pytest

from smallbiot import cli
from smallbiot.geometry import named_shape, save_shape


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_phi_dictionary(capsys):
    code, out, _ = run(capsys, "phi", "--dict", "disk")
    rec = json.loads(out)
    assert code == 0 and rec["phi"] == 0.5 and rec["source"] == "closed form"


def test_phi_fe_solve(capsys):
    code, out, _ = run(capsys, "phi", "--shape", "square", "--levels", "2")
    rec = json.loads(out)
    assert rec["phi"] == pytest.approx(2 / 3, rel=1e-10)
    assert rec["levels"] == 2 and len(rec["history"]) == 2


def test_phi_with_materials_file(capsys, tmp_path):
    mat = tmp_path / "m.json"
    mat.write_text(json.dumps({"sigma": {"0": 1e6, "1": 1e6}, "kappa": {"0": 1.0, "1": 20.0},
                               "regions": [{"id": 1, "box": [0.5, 0.0, 1.0, 1.0]}]}))
    code, out, _ = run(capsys, "phi", "--shape", "square", "--levels", "2", "--materials", str(mat))
    rec = json.loads(out)
    assert code == 0 and rec["materials"] == "piecewise" and rec["phi"] < 2 / 3


def test_shape_file_input(capsys, tmp_path):
    path = tmp_path / "tri.shape"
    save_shape(named_shape("equilateral"), path)
    code, out, _ = run(capsys, "phi", "--shape", str(path), "--levels", "2")
    assert json.loads(out)["phi"] == pytest.approx(1.0, rel=1e-10)


def test_classify(capsys):
    _, out, _ = run(capsys, "classify", "--shape", "square", "--levels", "2", "--B", "0.1")
    rec = json.loads(out)
    assert rec["verdict"] == "textbook criterion adequate"
    assert rec["Bi_dunk_prime"]["0.1"] == pytest.approx(2 / 3 * 0.1 / 4)
    _, out, _ = run(capsys, "classify", "--shape", "sart2", "--levels", "2")
    rec = json.loads(out)
    assert rec["verdict"] == "lumped criterion unreliable" and rec["phi"] > 100


def test_distance(capsys):
    _, out, _ = run(capsys, "distance", "--shape", "sart1", "--other", "sartc", "--levels", "2")
    rec = json.loads(out)
    assert rec["D"] < 1e-3 and rec["delta_phi"] < 0.05


def test_table_csv(capsys):
    code, out, _ = run(capsys, "table", "2", "--shape", "interval", "--B", "0,0.1", "--levels", "2")
    lines = out.splitlines()
    meta = json.loads(lines[0][2:])
    assert code == 0 and meta["table"] == "2" and meta["dt_policy"]["unit"] == "tau1"
    assert lines[1] == ",".join(cli.TABLE_COLUMNS["2"])
    zero = [float(x) for x in lines[2].split(",")]
    row = [float(x) for x in lines[3].split(",")]
    assert zero == [0.0] * 5
    assert row[0] == 0.1 and row[1] == pytest.approx(0.05)
    assert row[2] == pytest.approx(row[3], rel=0.05)


def test_table_dat_and_json(capsys):
    _, out, _ = run(capsys, "table", "4", "--shape", "interval", "--B", "0.1", "--format", "dat")
    assert out.splitlines()[1] == "# " + " ".join(cli.TABLE_COLUMNS["4"])
    _, out, _ = run(capsys, "table", "3", "--shape", "interval", "--B", "0.1", "--format", "json")
    payload = json.loads(out)
    assert payload["meta"]["levels"] == 2 and payload["rows"][0]["e2P_avg"] > 0


def test_simulate_to_file(capsys, tmp_path):
    dest = tmp_path / "trace.csv"
    code, out, _ = run(capsys, "simulate", "--shape", "interval", "--B", "0.1", "--out", str(dest))
    assert code == 0 and out == ""
    lines = dest.read_text().splitlines()
    meta = json.loads(lines[0][2:])
    assert meta["seed"] == 0 and "e1_avg" in meta and "e1_asymp" in meta
    assert lines[1] == "t,u_avg,u_boundary_avg,u_delta,u1_avg,u2P_avg"
    data = np.loadtxt(lines[2:], delimiter=",")
    assert data[0, 1] == 1.0 and np.all(np.diff(data[:, 1]) < 0)
    assert np.abs(data[:, 1] - data[:, 5]).max() == pytest.approx(meta["e2P_avg"], abs=1e-10)


def test_simulate_zero_biot(capsys):
    code, out, _ = run(capsys, "simulate", "--shape", "interval", "--B", "0", "--tfinal-frac", "1")
    data = np.loadtxt(out.splitlines()[2:], delimiter=",")
    assert code == 0 and np.allclose(data[:, 1], 1.0)


def test_errors_return_code_two(capsys):
    code, _, err = run(capsys, "phi", "--shape", "torus")
    assert code == 2 and "unknown shape" in err
    with pytest.raises(SystemExit) as exc:
        cli.main(["table", "2", "--B", "abc"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit):
        cli.main(["distance", "--other", "sart1", "--weights", "1"])
    code, _, err = run(capsys, "distance", "--shape", "sart1", "--other", "sartc",
                       "--weights", "0.9,0.9", "--levels", "2")
    assert code == 2


def test_console_script_version():
    out = subprocess.run([sys.executable, "-m", "smallbiot.cli", "--version"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip() == cli.__version__
