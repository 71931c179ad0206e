import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from ddro.cli import FIGURES, RECORD_COLUMNS, SUMMARY_COLUMNS, main
from ddro.core import read_scenarios_csv


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    lines = [json.loads(line) for line in out.splitlines() if line.strip()]
    return code, lines


def test_solve_saa_linear_gives_vertex(capsys):
    code, (res,) = run(capsys, "solve", "--synthetic", "--m", "2", "--n", "10", "--approach", "saa", "--rho", "0")
    assert code == 0 and res["status"] == "Optimal"
    assert sorted(np.round(res["x"], 6)) == [0.0, 1.0]


def test_solve_wdroa_zero_matches_saa(capsys, tmp_path):
    data = tmp_path / "d.csv"
    assert run(capsys, "gen-data", "--m", "4", "--n", "20", "--seed", "3", "--out", str(data))[0] == 0
    _, (a,) = run(capsys, "solve", "--data", str(data), "--approach", "wdroa", "--eps", "0")
    _, (s,) = run(capsys, "solve", "--data", str(data), "--approach", "saa")
    assert a["objective"] == pytest.approx(s["objective"], abs=1e-6)


def test_solve_outputs(capsys):
    code, (res,) = run(capsys, "solve", "--synthetic", "--m", "3", "--n", "15", "--approach", "wdros",
                       "--eps", "0.05")
    assert code == 0 and res["lambda_star"] > 0 and len(res["x"]) == 3
    assert abs(sum(res["x"]) - 1) < 1e-9
    code, (res,) = run(capsys, "solve", "--synthetic", "--m", "3", "--approach", "var-wdroa", "--eps", "0.1")
    assert code == 0 and res["objective"] > 0


@pytest.mark.parametrize("argv", [
    ("solve", "--synthetic", "--approach", "wdros", "--support", "limited", "--p", "2", "--eps", "0.1"),
    ("solve", "--synthetic", "--approach", "wdros", "--q", "3"),
    ("solve", "--synthetic", "--approach", "bogus"),
    ("solve", "--approach", "saa"),
    ("solve", "--synthetic", "--approach", "saa", "--eps", "-1"),
    ("solve", "--synthetic", "--approach", "saa", "--alpha", "0"),
    ("gen-data", "--m", "0", "--n", "5", "--out", "x.csv"),
])
def test_bad_flags_exit_2(capsys, argv):
    try:
        code = main(list(argv))
    except SystemExit as exc:
        code = exc.code
    assert code == 2


def test_missing_data_file_exits_2(capsys, tmp_path):
    assert main(["solve", "--data", str(tmp_path / "nope.csv"), "--approach", "saa"]) == 2


def test_data_below_floor_exits_2(capsys, tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("xi_1,xi_2\n-2.0,0.1\n0.1,0.2\n")
    assert main(["solve", "--data", str(p), "--approach", "wdroa", "--support", "limited",
                 "--p", "1", "--q", "1", "--eps", "0.1"]) == 2


def test_gen_data(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert run(capsys, "gen-data", "--m", "10", "--n", "30", "--seed", "1", "--out", str(path))[0] == 0
    assert read_scenarios_csv(a).scenarios.shape == (30, 10)
    assert a.read_bytes() == b.read_bytes()


def _sweep(capsys, out, *extra):
    return run(capsys, "sweep", "--runs", "2", "--n", "10", "--m", "3", "--n-eval", "2000",
               "--eps-points", "3", "--out", str(out), *extra)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_sweep_smoke_and_determinism(capsys, tmp_path):
    code, (msg,) = _sweep(capsys, tmp_path / "a")
    assert code == 0 and msg["failures"] == 0
    for name in ("records.csv", "summary.csv", *FIGURES):
        assert (tmp_path / "a" / name).is_file()
    recs = _rows(tmp_path / "a" / "records.csv")
    assert len(recs) == 2 * 3 * 2
    assert list(recs[0])[: len(RECORD_COLUMNS)] == list(RECORD_COLUMNS)
    summary = _rows(tmp_path / "a" / "summary.csv")
    assert tuple(summary[0]) == SUMMARY_COLUMNS and len(summary) == 6
    assert _sweep(capsys, tmp_path / "b")[0] == 0
    for name in ("records.csv", "summary.csv", *FIGURES):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_sweep_summary_invariants(capsys, tmp_path):
    assert _sweep(capsys, tmp_path)[0] == 0
    recs = _rows(tmp_path / "records.csv")
    by_key = {(r["eps"], r["run"], r["approach"]): r for r in recs}
    for (eps, run_, approach), r in by_key.items():
        if approach == "S":
            a = by_key[eps, run_, "A"]
            assert float(r["j_hat"]) <= float(a["j_hat"]) + 1e-6
    summary = _rows(tmp_path / "summary.csv")
    for row in summary:
        cell = [r for r in recs if r["eps"] == row["eps"] and r["approach"] == row["approach"]]
        assert float(row["mean_j_hat"]) == pytest.approx(np.mean([float(r["j_hat"]) for r in cell]))
        rel = np.mean([float(r["j_oos_portfolio"]) <= float(r["j_hat"]) for r in cell])
        assert float(row["reliability_portfolio"]) == pytest.approx(rel)


def test_sweep_threads_env(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("DDRO_THREADS", "2")
    assert _sweep(capsys, tmp_path / "p")[0] == 0
    monkeypatch.delenv("DDRO_THREADS")
    assert _sweep(capsys, tmp_path / "s")[0] == 0
    assert (tmp_path / "p" / "records.csv").read_bytes() == (tmp_path / "s" / "records.csv").read_bytes()
    monkeypatch.setenv("DDRO_THREADS", "zero")
    assert _sweep(capsys, tmp_path / "x")[0] == 2


def test_sweep_rejects_unwritable_out(capsys, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert _sweep(capsys, blocker / "sub")[0] == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ddro.cli", "gen-data", "--m", "2", "--n", "3",
                           "--out", str(tmp_path / "g.csv")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["n"] == 3
