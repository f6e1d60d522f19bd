"""Benchmark harness: timing three engines and validating their gradients.

Engines per case and size:

* ``static``   the bound expression (forward + backward + gradient readout);
* ``tape``     the dynamic-tape oracle, re-recorded every evaluation;
* ``baseline`` a handwritten forward-only evaluation (no gradient).

Gradient references: closed forms (evaluated in extended-precision decimal or
with exactly rounded sums) for the micro cases; for the two models the static
gradient is checked against the tape and the tape against central finite
differences on a few seeded coordinates.
"""

import csv
import decimal
import math
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import models, nodes, stats, tape
from .core import Var, bind
from .errors import ConfigError

CASES = (
    "sum", "sum_iter", "prod", "prod_iter", "log_sum_exp", "matmul",
    "normal_lpdf", "regression", "stochastic_volatility",
)
ENGINES = ("static", "tape", "baseline")
CSV_HEADER = ("bench", "engine", "n", "iterations", "mean_ns", "rel_to_static",
              "grad_max_rel_err")

NORMAL_MU = -0.56
NORMAL_SIGMA = 1.37

# gradient gates
EXACT_TOL = 1e-12   # engine vs closed form, static vs tape
FD_TOL = 1e-6       # tape vs finite differences, |g - fd| / max(|fd|, 1)
VALUE_TOL = 1e-12   # baseline vs static forward value
FD_STEP = 1e-5
FD_COORDS = 8

MIN_TIMED_SECONDS = 0.1

_DEC = decimal.Context(prec=50)


def size_for_exponent(name, k):
    """Problem size for the exponent ``k`` of the 2^k size ladder.

    matmul uses square K x K matrices with K*K close to 2^k.
    """
    if name == "matmul":
        return max(1, round(2.0 ** (k / 2.0)))
    return 2 ** k


@dataclass
class Instance:
    name: str
    size: int
    variables: list
    expr: object
    theta: np.ndarray
    tape_program: object
    baseline: object            # theta -> float
    reference: np.ndarray = None  # closed-form gradient, if any


# ------------------------------------------------------------------ references

def _loo_products(x):
    """Leave-one-out products in 50-digit decimal arithmetic."""
    d = [decimal.Decimal(float(v)) for v in x]
    n = len(d)
    prefix = [decimal.Decimal(1)] * (n + 1)
    for i, v in enumerate(d):
        prefix[i + 1] = _DEC.multiply(prefix[i], v)
    out = np.empty(n)
    suffix = decimal.Decimal(1)
    for i in range(n - 1, -1, -1):
        out[i] = float(_DEC.multiply(prefix[i], suffix))
        suffix = _DEC.multiply(suffix, d[i])
    return out


def _softmax(x):
    e = [_DEC.exp(decimal.Decimal(float(v))) for v in x]
    total = _DEC.create_decimal(0)
    for v in e:
        total = _DEC.add(total, v)
    return np.array([float(_DEC.divide(v, total)) for v in e])


def _normal_grad(x):
    mu = decimal.Decimal(NORMAL_MU)
    s2 = _DEC.multiply(decimal.Decimal(NORMAL_SIGMA), decimal.Decimal(NORMAL_SIGMA))
    return np.array([-float(_DEC.divide(_DEC.subtract(decimal.Decimal(float(v)), mu), s2))
                     for v in x])


def _matmul_grad(A, B):
    """d/dA and d/dB of sum(A @ B), flattened column-major and concatenated."""
    gA = np.array([[math.fsum(B[k, :]) for k in range(B.shape[0])]] * A.shape[0])
    gB = np.array([[math.fsum(A[:, k])] * B.shape[1] for k in range(A.shape[1])])
    return np.concatenate([gA.ravel(order="F"), gB.ravel(order="F")])


# ------------------------------------------------------------- case builders

def _chain(x, n, op):
    acc = x[0]
    for i in range(1, n):
        acc = op(acc, x[i])
    return acc


def _loop_sum(theta):
    acc = float(theta[0])
    for v in theta[1:]:
        acc += float(v)
    return acc


def _loop_prod(theta):
    acc = float(theta[0])
    for v in theta[1:]:
        acc *= float(v)
    return acc


def _tape_chain(op):
    def f(t):
        acc = t[0]
        for v in t[1:]:
            acc = op(acc, v)
        return acc
    return f


def make_instance(name, size, seed):
    """Seeded inputs and all three evaluations for one (case, size)."""
    if name not in CASES:
        raise ConfigError(f"unknown benchmark {name!r}; choose from {', '.join(CASES)}")
    if size < 1:
        raise ConfigError(f"size must be positive, got {size}")
    rng = np.random.default_rng(seed)
    n = size

    if name in ("sum", "sum_iter", "prod", "prod_iter", "log_sum_exp", "normal_lpdf"):
        if name.startswith("prod"):
            data = np.exp(rng.uniform(-0.1, 0.1, n))
        else:
            data = rng.standard_normal(n)
        x = Var(data, name="x")
        theta = x.values.copy()

        if name == "sum":
            return Instance(name, n, [x], nodes.sum(x), theta, tape.tsum,
                            lambda th: float(np.sum(th)), np.ones(n))
        if name == "sum_iter":
            return Instance(name, n, [x], _chain(x, n, lambda a, b: a + b), theta,
                            _tape_chain(lambda a, b: a + b), _loop_sum, np.ones(n))
        if name == "prod":
            return Instance(name, n, [x], nodes.prod(x), theta, tape.tprod,
                            lambda th: float(np.prod(th)), _loo_products(data))
        if name == "prod_iter":
            return Instance(name, n, [x], _chain(x, n, lambda a, b: a * b), theta,
                            _tape_chain(lambda a, b: a * b), _loop_prod, _loo_products(data))
        if name == "log_sum_exp":
            return Instance(name, n, [x], nodes.log(nodes.sum(nodes.exp(x))), theta,
                            lambda t: tape.tlog(tape.tsum([tape.texp(v) for v in t])),
                            lambda th: math.log(np.sum(np.exp(th))), _softmax(data))

        def normal_base(th):
            z = (th - NORMAL_MU) / NORMAL_SIGMA
            return float(-0.5 * np.dot(z, z) - len(th) * math.log(NORMAL_SIGMA))

        return Instance(name, n, [x], stats.normal_lpdf(x, NORMAL_MU, NORMAL_SIGMA), theta,
                        lambda t: tape.tnormal_lpdf(t, NORMAL_MU, NORMAL_SIGMA),
                        normal_base, _normal_grad(data))

    if name == "matmul":
        K = n
        A = Var(rng.uniform(0.0, 1.0, (K, K)), name="A")
        B = Var(rng.uniform(0.0, 1.0, (K, K)), name="B")
        theta = np.concatenate([A.values, B.values])

        def tape_mm(t):
            a = [[t[i + k * K] for k in range(K)] for i in range(K)]
            b = [[t[K * K + k + j * K] for j in range(K)] for k in range(K)]
            return tape.tsum([v for row in tape.tmatmul(a, b) for v in row])

        def base_mm(th):
            a = th[:K * K].reshape((K, K), order="F")
            b = th[K * K:].reshape((K, K), order="F")
            return float(np.sum(a @ b))

        return Instance(name, K, [A, B], nodes.sum(A @ B), theta, tape_mm, base_mm,
                        _matmul_grad(A.value, B.value))

    if name == "regression":
        p = models.make_regression(n, seed=seed)
        return Instance(name, n, p.variables, models.build_regression(p), p.params(),
                        models.tape_regression(p), lambda th: models.baseline_regression(p, th))

    if n < 2:
        raise ConfigError("stochastic_volatility needs n >= 2")
    p = models.make_sv(n, seed=seed)
    return Instance(name, n, p.variables, models.build_sv(p), p.params(),
                    models.tape_sv(p), lambda th: models.baseline_sv(p, th))


# ------------------------------------------------------------------ evaluation

class StaticRunner:
    """One reusable static evaluation: reset, autodiff, copy gradient out."""

    def __init__(self, inst):
        self.inst = inst
        self.bound = bind(inst.expr)
        self.grad = np.zeros(inst.theta.size)
        self._slots = []
        offset = 0
        for v in inst.variables:
            k = v.values.size
            self._slots.append((v.adjoints, self.grad[offset:offset + k]))
            offset += k
        self.value = math.nan

    def __call__(self):
        for adj, _ in self._slots:
            adj.fill(0.0)
        self.value = self.bound.autodiff()
        for adj, out in self._slots:
            np.copyto(out, adj)


def _max_rel_err(g, ref):
    g = np.asarray(g, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    err = np.abs(g - ref) / np.maximum(1e-30, np.abs(ref))
    err[np.isnan(err)] = math.inf
    return float(np.max(err)) if err.size else 0.0


def _fd_err(g, fd):
    err = np.abs(g - fd) / np.maximum(np.abs(fd), 1.0)
    err[np.isnan(err)] = math.inf
    return float(np.max(err)) if err.size else 0.0


def fd_coordinates(dim, seed):
    """Seeded subset of at most ``FD_COORDS`` gradient coordinates."""
    if dim <= FD_COORDS:
        return np.arange(dim)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(dim, FD_COORDS, replace=False))


def _fd_partial(inst, coords):
    theta = inst.theta
    out = np.empty(len(coords))
    probe = theta.copy()
    for j, i in enumerate(coords):
        xi = theta[i]
        step = FD_STEP * max(1.0, abs(xi))
        hi, lo = xi + step, xi - step
        probe[i] = hi
        f_hi = inst.baseline(probe)
        probe[i] = lo
        f_lo = inst.baseline(probe)
        probe[i] = xi
        out[j] = (f_hi - f_lo) / (hi - lo)
    return out


@dataclass
class Validation:
    static_err: float
    tape_err: float
    value_err: float
    passed: bool
    message: str = ""


def _validate(inst, static_grad, static_value, tape_grad, tape_value, seed):
    base_value = inst.baseline(inst.theta)
    scale = max(abs(static_value), abs(base_value))
    value_err = 0.0 if base_value == static_value else abs(base_value - static_value) / max(scale, 1e-30)
    problems = []
    if inst.reference is not None:
        static_err = _max_rel_err(static_grad, inst.reference)
        tape_err = _max_rel_err(tape_grad, inst.reference)
        if not tape_err <= EXACT_TOL:
            problems.append(f"tape vs closed form {tape_err:.3e}")
    else:
        static_err = _max_rel_err(static_grad, tape_grad)
        coords = fd_coordinates(inst.theta.size, seed)
        tape_err = _fd_err(tape_grad[coords], _fd_partial(inst, coords))
        if not tape_err <= FD_TOL:
            problems.append(f"tape vs finite differences {tape_err:.3e}")
    if not static_err <= EXACT_TOL:
        problems.append(f"static gradient error {static_err:.3e}")
    if not value_err <= VALUE_TOL:
        problems.append(f"baseline/static value mismatch {value_err:.3e}")
    return Validation(static_err, tape_err, value_err, not problems, "; ".join(problems))


def validate_gradients(case, size, seed):
    """Max relative error of the static gradient against its reference.

    The reference is the closed form where one exists, otherwise the tape
    oracle.  Non-finite errors are reported as ``inf``.
    """
    inst = make_instance(case, size, seed)
    runner = StaticRunner(inst)
    runner()
    ref = inst.reference
    if ref is None:
        _, ref = tape.tape_grad(inst.tape_program, inst.theta)
    return _max_rel_err(runner.grad, ref)


# ---------------------------------------------------------------------- timing

def _time(fn, iters, warmup):
    for _ in range(warmup):
        fn()
    if iters is None:
        t0 = time.perf_counter()
        fn()
        once = time.perf_counter() - t0
        iters = max(1, math.ceil(MIN_TIMED_SECONDS / max(once, 1e-9)))
    t0 = time.perf_counter_ns()
    for _ in range(iters):
        fn()
    return iters, (time.perf_counter_ns() - t0) / iters


@dataclass
class ReportRow:
    bench: str
    engine: str
    n: int
    iterations: int
    mean_ns: float
    rel_to_static: float
    grad_max_rel_err: float

    def csv_fields(self):
        return (self.bench, self.engine, str(self.n), str(self.iterations),
                f"{self.mean_ns:.1f}", f"{self.rel_to_static:.6f}",
                "nan" if math.isnan(self.grad_max_rel_err) else f"{self.grad_max_rel_err:.6e}")


def run_benchmark(case, sizes, iters=None, warmup=10, seed=0, log=None):
    """Time and validate ``case`` at each size.

    ``iters=None`` picks a count per engine so the timed loop lasts at least
    0.1 s.  Returns ``(rows, failures)``; rows of a size whose validation
    failed are left out and described in ``failures``.
    """
    if case not in CASES:
        raise ConfigError(f"unknown benchmark {case!r}; choose from {', '.join(CASES)}")
    if not sizes:
        raise ConfigError("no sizes given")
    if iters is not None and iters < 1:
        raise ConfigError("iters must be at least 1")
    if warmup < 0:
        raise ConfigError("warmup must be non-negative")
    rows, failures = [], []
    for size in sizes:
        inst = make_instance(case, size, seed)
        runner = StaticRunner(inst)
        tape_result = {}

        def run_tape():
            tape_result["out"] = tape.tape_grad(inst.tape_program, inst.theta)

        theta = inst.theta

        def run_baseline():
            return inst.baseline(theta)

        timings = {
            "static": _time(runner, iters, warmup),
            "tape": _time(run_tape, iters, warmup),
            "baseline": _time(run_baseline, iters, warmup),
        }
        tape_value, tape_g = tape_result["out"]
        check = _validate(inst, runner.grad, runner.value, tape_g, tape_value, seed)
        if not check.passed:
            msg = f"{case} n={size}: validation failed: {check.message}"
            failures.append(msg)
            if log is not None:
                print(msg, file=log)
            continue
        static_ns = timings["static"][1]
        errs = {"static": check.static_err, "tape": check.tape_err, "baseline": math.nan}
        for engine in ENGINES:
            it, ns = timings[engine]
            rel = 1.0 if engine == "static" else ns / static_ns
            rows.append(ReportRow(case, engine, size, it, ns, rel, errs[engine]))
    return rows, failures


def emit_report(rows, path):
    """Write the CSV report; rows are ordered by (case, size, engine)."""
    if not rows:
        raise ValueError("no rows to write")
    case_rank = {c: i for i, c in enumerate(CASES)}
    engine_rank = {e: i for i, e in enumerate(ENGINES)}
    ordered = sorted(rows, key=lambda r: (case_rank.get(r.bench, len(CASES)), r.bench,
                                          r.n, engine_rank[r.engine]))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in ordered:
            w.writerow(r.csv_fields())
    return path


def run_all(cases, exponents, iters=None, warmup=10, seed=0, log=sys.stderr):
    rows, failures = [], []
    for case in cases:
        sizes = list(dict.fromkeys(size_for_exponent(case, k) for k in exponents))
        r, f = run_benchmark(case, sizes, iters=iters, warmup=warmup, seed=seed, log=log)
        rows += r
        failures += f
    return rows, failures
