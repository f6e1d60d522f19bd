"""Acceptance criteria 1-9, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py`` (lines are printed even when
output capture is on) or directly with ``python tests/test_acceptance.py``.
"""

import csv
import math
import os
import shutil
import subprocess
import sys
import time

import numpy as np
import pytest

import exprad as ad
from exprad import bench, models
from exprad.instrument import count_allocations
from exprad.nodes import Constant
from exprad.tape import tape_grad

sys.path.insert(0, os.path.dirname(__file__))
from op_catalogue import OPS, fd_worst  # noqa: E402

_capture = {"manager": None}


def report(number, title, ok, detail, started):
    line = (f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail} "
            f"({time.perf_counter() - started:.1f}s)")
    mgr = _capture["manager"]
    if mgr is not None:
        with mgr.global_and_fixture_disabled():
            print(line, flush=True)
    else:
        print(line, flush=True)
    assert ok, line


@pytest.fixture(autouse=True)
def _uncaptured(request):
    _capture["manager"] = request.config.pluginmanager.getplugin("capturemanager")
    yield
    _capture["manager"] = None


def test_criterion_1_worked_example():
    t0 = time.perf_counter()
    x1, x2, x3 = ad.Var(0.0), ad.Var(0.0), ad.Var(1.0)
    value = ad.bind(ad.sin(x1) + ad.cos(x2) * x3 - ad.log(x3)).autodiff()
    grad = [float(x1.grad), float(x2.grad), float(x3.grad)]
    err = max(abs(value - 1.0), *(abs(g - e) for g, e in zip(grad, (1.0, 0.0, 0.0))))
    report(1, "worked-example gradient", err <= 1e-12,
           f"value={value}, grad={grad}, max abs err={err:.1e} (tol 1e-12)", t0)


def test_criterion_2_oracle_equivalence():
    t0 = time.perf_counter()
    worst, where = 0.0, ""
    for case in bench.CASES:
        for k in (1, 2, 6):
            inst = bench.make_instance(case, bench.size_for_exponent(case, k), 42)
            runner = bench.StaticRunner(inst)
            runner()
            _, tg = tape_grad(inst.tape_program, inst.theta)
            err = float(np.max(np.abs(runner.grad - tg) / np.maximum(np.abs(tg), 1e-30)))
            if err >= worst:
                worst, where = err, f"{case} n={inst.size}"
    report(2, "static == tape oracle", worst <= 1e-12,
           f"27 case/size pairs, worst rel err {worst:.2e} at {where} (tol 1e-12)", t0)


def test_criterion_3_finite_difference_suite():
    t0 = time.perf_counter()
    results = {name: fd_worst(name, points=100, seed=2024) for name in OPS}
    name = max(results, key=results.get)
    report(3, "finite-difference suite", results[name] <= 1e-6,
           f"{len(results)} ops x 100 points, worst {results[name]:.2e} ({name}) (tol 1e-6)", t0)


def test_criterion_4_closed_form_accuracy():
    t0 = time.perf_counter()
    worst, where = 0.0, ""
    for case in ("sum", "sum_iter", "prod", "prod_iter", "log_sum_exp", "matmul", "normal_lpdf"):
        for k in range(1, 11):
            size = bench.size_for_exponent(case, k)
            err = bench.validate_gradients(case, size, 42)
            if err >= worst:
                worst, where = err, f"{case} n={size}"
    report(4, "closed-form accuracy up to 2^10", worst <= 1e-13,
           f"worst grad_max_rel_err {worst:.2e} at {where} (tol 1e-13)", t0)


def test_criterion_5_exact_allocation():
    t0 = time.perf_counter()
    bad = []
    checked = 0
    for case in bench.CASES:
        for k in (1, 4, 8):
            inst = bench.make_instance(case, bench.size_for_exponent(case, k), 7)
            need = ad.bind_size(inst.expr)
            arena = ad.Arena(*need)
            bound = ad.bind(inst.expr, arena)
            if (arena.value_offset, arena.adjoint_offset) != need:
                bad.append(f"{case} n={inst.size} storage")
            with count_allocations() as c:
                bound.forward()
                bound.backward()
            if c.count:
                bad.append(f"{case} n={inst.size} allocs={c.count}")
            checked += 1
    report(5, "exact storage, zero allocations", not bad,
           f"{checked} bound expressions, problems: {bad or 'none'}", t0)


def test_criterion_6_sufficient_statistic():
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 65))
        data = rng.normal(rng.normal(), rng.uniform(0.1, 3.0), n)
        m, s = float(rng.normal()), float(rng.uniform(0.2, 4.0))
        fast = ad.bind(ad.normal_lpdf(data, ad.Var(m), ad.Var(s))).autodiff()
        slow = ad.bind(ad.normal_lpdf(ad.Var(data), ad.Var(m), ad.Var(s))).autodiff()
        worst = max(worst, abs(fast - slow) / abs(slow))
    node = ad.normal_lpdf(rng.normal(size=100), ad.Var(0.3), ad.Var(1.1))
    bound = ad.bind(node)
    for _ in range(5):
        bound.autodiff()
    ok = worst <= 1e-10 and node.stat_passes == 1
    report(6, "sufficient-statistic fast path", ok,
           f"200 instances, worst rel diff {worst:.2e} (tol 1e-10); "
           f"passes over x in 5 calls = {node.stat_passes}", t0)


def test_criterion_7_constant_noop():
    t0 = time.perf_counter()
    p = models.make_regression(64, seed=7)
    bound = ad.bind(models.build_regression(p))
    consts = [n for n in bound.nodes if isinstance(n, Constant) and n.shape.size > 1]
    bound.autodiff()
    writes = sum(c.adjoint_writes for c in consts)
    windows = sum(c.view.adjoint.size for c in consts)
    ok = len(consts) == 2 and writes == 0 and windows == 0
    report(7, "constant X, y no-op backward", ok,
           f"X and y nodes found={len(consts)}, adjoint writes={writes}, "
           f"adjoint storage={windows}", t0)


@pytest.mark.slow
def test_criterion_8_performance(tmp_path):
    t0 = time.perf_counter()
    rows, failures = bench.run_all(list(bench.CASES), range(1, 15), seed=42, log=None)
    out = tmp_path / "full.csv"
    if rows:
        bench.emit_report(rows, out)
    sum_rows = {r.engine: r for r in rows if r.bench == "sum" and r.n == 4096}
    ratio = sum_rows["static"].mean_ns / sum_rows["tape"].mean_ns if len(sum_rows) == 3 else math.inf
    ok = not failures and ratio <= 1.0 and len(rows) == 9 * 14 * 3
    report(8, "performance (soft)", ok,
           f"{len(rows)} rows over 2^1..2^14, {len(failures)} failed validations; "
           f"sum n=4096 static/tape = {ratio:.4f} (need <= 1)", t0)


def _adbench():
    exe = shutil.which("adbench")
    return [exe] if exe else [sys.executable, "-m", "exprad.cli"]


def test_criterion_9_cli_contract(tmp_path):
    t0 = time.perf_counter()
    outs, codes = [], []
    for i in range(2):
        path = tmp_path / f"r{i}.csv"
        proc = subprocess.run(_adbench() + [
            "run", "--bench", "all", "--min-exp", "1", "--max-exp", "6", "--iters", "50",
            "--warmup", "5", "--seed", "42", "--out", str(path)], capture_output=True, text=True)
        codes.append(proc.returncode)
        with open(path) as fh:
            outs.append([(r["bench"], r["engine"], r["n"], r["iterations"], r["grad_max_rel_err"])
                         for r in csv.DictReader(fh)])
    ok = codes == [0, 0] and outs[0] == outs[1] and len(outs[0]) > 0
    report(9, "CLI contract", ok,
           f"exit codes {codes}, {len(outs[0])} rows, non-timing columns identical: "
           f"{outs[0] == outs[1]}", t0)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
