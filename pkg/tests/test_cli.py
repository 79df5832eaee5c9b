import csv
import json
import subprocess
import sys

import pytest

from spinorbit import cli, files


@pytest.fixture(autouse=True)
def _threads(monkeypatch):
    monkeypatch.setenv("SPINORBIT_THREADS", "1")


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    fields = dict(ln.split("=", 1) for ln in out.splitlines() if "=" in ln)
    return code, fields, out, err


def test_conformal_factor(capsys):
    code, f, _, _ = run(capsys, "conformal-factor", "--ecc", "0.25", "--eta", "1e-3", "--check")
    assert code == 0
    assert float(f["difference"]) < 1e-9
    code, f, _, _ = run(capsys, "conformal-factor", "--ecc", "0", "--eta", "1e-3")
    assert f["a5_integral"].startswith("6.28318530717958")


def test_compute_verify_continue(capsys, tmp_path):
    t0 = tmp_path / "t0.txt"
    code, f, _, _ = run(capsys, "--threads", "1", "compute", "--omega", "silver", "--eta", "1e-3",
                        "--model", "averaged", "--eps", "1e-3", "--n", "32", "--out", str(t0),
                        "--curve-out", str(tmp_path / "c.csv"))
    assert code == 0 and t0.exists() and int(f["n"]) >= 32
    assert float(f["err_interlaced"]) < 1e-10
    code, f, _, _ = run(capsys, "verify", "--torus", str(t0))
    assert code == 0 and f["match"] == "true"
    out = tmp_path / "run"
    code, f, _, _ = run(capsys, "continue", "--from", str(t0), "--eps-target", "2e-3",
                        "--deps0", "5e-4", "--curves", "--out-dir", str(out))
    assert code == 0 and f["stopped"] == "target" and int(f["steps"]) == 2
    rows = list(csv.reader(open(out / "continuation.csv")))
    assert tuple(rows[0]) == files.CONTINUATION_HEADER and len(rows) == 4
    assert (out / "torus_0002.txt").exists() and (out / "curve_0002.csv").exists()
    assert files.read_torus(out / "torus_0002.txt").params.eps == 2e-3


def test_torus_alias_and_subprocess(tmp_path):
    # the console entry point and a leading "torus" token both work
    p = subprocess.run([sys.executable, "-m", "spinorbit.cli", "torus", "conformal-factor",
                        "--ecc", "0.1", "--eta", "1e-6"], capture_output=True, text=True)
    assert p.returncode == 0 and "lambda=" in p.stdout


def test_seed_and_rotnum(capsys, tmp_path):
    code, f, _, _ = run(capsys, "seed", "--omega", "silver", "--eta", "1e-3", "--eps", "1e-3",
                        "--n", "64", "--out", str(tmp_path / "s.txt"))
    assert code == 0 and float(f["err_grid"]) < 1e-2
    sol = files.read_torus(tmp_path / "s.txt")
    assert sol.n == 64
    code, f, _, _ = run(capsys, "rotnum", "--eps", "1e-4", "--eta", "1e-3", "--ecc", "0.25")
    assert code == 0 and f["circle_like"] == "true"
    assert float(f["omega_hat"]) == pytest.approx(1.3813, abs=1e-3)


def test_sweep_drift(capsys, tmp_path):
    code, _, out, _ = run(capsys, "sweep-drift", "--eps", "0", "--eta", "1e-2", "--e-list", "0.1",
                          "0.2", "--out", str(tmp_path / "r.csv"))
    assert code == 0 and len(out.splitlines()) == 2
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows[0] == ["e", "omega_hat", "quality", "nbar_over_lbar"] and len(rows) == 3


def test_compare_averaged(capsys, tmp_path):
    code, _, out, _ = run(capsys, "compare-averaged", "--omega", "silver", "--eta", "1e-3",
                          "--eps-list", "1e-3", "--tol", "1e-12", "--out-dir", str(tmp_path))
    assert code == 0
    rows = list(csv.reader(open(tmp_path / "avg_vs_full.csv")))
    assert tuple(rows[0]) == files.AVG_HEADER and float(rows[1][3]) > 0
    assert (tmp_path / "avgdiff.csv").exists()


def test_jet_test_reports_failure_as_json(capsys):
    # in double the h/2 differences sit at the rounding floor
    with pytest.warns(RuntimeWarning, match="precision floor"):
        code, _, _, err = run(capsys, "jet-test")
    assert code == 1
    rec = json.loads(err.strip().splitlines()[-1])
    assert rec["status"] == "failure" and rec["command"] == "jet-test"


def test_jet_test_passes_in_extended_precision(capsys):
    code, f, _, _ = run(capsys, "--prec", "128", "jet-test")
    assert code == 0 and abs(float(f["log2_ratio"]) - 2) < 0.1


def test_usage_errors(capsys, tmp_path):
    assert cli.main(["frobnicate"]) == 2
    assert cli.main(["verify", "--torus", str(tmp_path / "missing.txt")]) == 2
    bad = tmp_path / "bad.txt"
    bad.write_text("spinorbit-torus v9\n")
    assert cli.main(["verify", "--torus", str(bad)]) == 2
    assert cli.main(["--prec", "10", "conformal-factor", "--ecc", "0", "--eta", "0"]) == 2
    assert cli.main(["compute", "--omega", "0.5", "--eta", "1e-3", "--out",
                     str(tmp_path / "x.txt")]) == 2
    capsys.readouterr()
