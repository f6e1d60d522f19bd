import csv
import subprocess
import sys

import pytest

from exprad.cli import main

NON_TIMING = ("bench", "engine", "n", "iterations", "grad_max_rel_err")


def _non_timing(path):
    with open(path) as fh:
        return [tuple(r[c] for c in NON_TIMING) for r in csv.DictReader(fh)]


def test_run_small(tmp_path):
    out = tmp_path / "r.csv"
    code = main(["run", "--bench", "sum,matmul", "--min-exp", "1", "--max-exp", "3",
                 "--iters", "3", "--warmup", "1", "--seed", "1", "--out", str(out)])
    assert code == 0
    rows = _non_timing(out)
    assert len(rows) == 3 * 3 + 3 * 3  # matmul exponents 1, 2, 3 -> K = 1, 2, 3
    assert {r[0] for r in rows} == {"sum", "matmul"}


def test_unknown_bench(tmp_path, capsys):
    assert main(["run", "--bench", "fft", "--out", str(tmp_path / "x.csv")]) == 2
    assert "unknown benchmark" in capsys.readouterr().err


def test_bad_exponents(tmp_path):
    assert main(["run", "--bench", "sum", "--min-exp", "3", "--max-exp", "2",
                 "--out", str(tmp_path / "x.csv")]) == 2


def test_bad_seed(tmp_path):
    assert main(["run", "--bench", "sum", "--seed", "-1", "--out", str(tmp_path / "x.csv")]) == 2


def test_missing_out():
    with pytest.raises(SystemExit):
        main(["run", "--bench", "sum"])


def test_failing_validation_exit_code(tmp_path, monkeypatch):
    from exprad import bench
    monkeypatch.setattr(bench, "EXACT_TOL", -1.0)
    code = main(["run", "--bench", "prod", "--min-exp", "1", "--max-exp", "1", "--iters", "1",
                 "--warmup", "0", "--out", str(tmp_path / "x.csv")])
    assert code == 1


def test_console_script_module(tmp_path):
    out = tmp_path / "r.csv"
    proc = subprocess.run([sys.executable, "-m", "exprad.cli", "run", "--bench", "sum",
                           "--min-exp", "1", "--max-exp", "2", "--iters", "2", "--warmup", "0",
                           "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert out.read_text().startswith("bench,engine,n,")
