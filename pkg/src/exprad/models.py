"""The two macro-benchmark log joint densities.

Bayesian linear regression::

    y ~ N(X w + b, sigma^2),  w ~ N(0, 1),  b ~ N(0, 1),  sigma ~ Unif(0.1, 10)

Stochastic volatility, with the transformation chain applied in listed order::

    h := h_std * sigma
    h[0] := h[0] / sqrt(1 - phi^2)
    h := h + mu
    h[i] := phi * (h[i-1] - mu),  i > 0          (in-place scan)

    y ~ N(0, e^h),  h_std ~ N(0, 1),  sigma ~ Cauchy(0, 5),
    mu ~ Cauchy(0, 10),  phi ~ Unif(-1, 1)

``|phi| >= 1`` raises DomainError (the square root must be positive).
``e^h`` is used as the per-element standard deviation.  The recursion omits
the ``h_std[i] * sigma`` innovation of the usual formulation; it is applied
exactly as written above.

Each problem provides three evaluations of the same density: the static
expression (``build_*``), a tape-recorded program (``tape_*``) and a plain
numpy forward evaluation (``baseline_*``).  Parameter vectors are flattened
in a fixed order, see ``param_names``.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import nodes, stats, tape
from .core import Var
from .errors import DomainError, ShapeError

REGRESSION_P = 10

SV_PRIOR_SIGMA_SCALE = 5.0
SV_PRIOR_MU_SCALE = 10.0


def _rng(seed):
    return np.random.default_rng(seed)


# ---------------------------------------------------------------- regression

@dataclass
class RegressionProblem:
    X: np.ndarray
    y: np.ndarray
    w: Var
    b: Var
    sigma: Var

    param_names = ("w", "b", "sigma")

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64).ravel()
        if self.X.ndim != 2:
            raise ShapeError(f"X must be a matrix, got shape {self.X.shape}")
        n, p = self.X.shape
        if self.y.size != n:
            raise ShapeError(f"y has {self.y.size} entries, X has {n} rows")
        if self.w.shape.size != p or not self.w.shape.kind == nodes.VECTOR:
            raise ShapeError(f"w must be a vector of length {p}")
        if not (self.b.shape.is_scalar and self.sigma.shape.is_scalar):
            raise ShapeError("b and sigma must be scalars")

    @property
    def N(self):
        return self.X.shape[0]

    @property
    def P(self):
        return self.X.shape[1]

    @property
    def variables(self):
        return [self.w, self.b, self.sigma]

    def params(self):
        return np.concatenate([v.values for v in self.variables])

    def set_params(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        p = self.P
        self.w.set_value(theta[:p])
        self.b.set_value(theta[p])
        self.sigma.set_value(theta[p + 1])

    def gradient(self):
        return np.concatenate([v.adjoints for v in self.variables])


def make_regression(N, P=REGRESSION_P, seed=0):
    """Seeded synthetic data and an in-support parameter point."""
    rng = _rng(seed)
    X = rng.standard_normal((N, P))
    w_true = rng.standard_normal(P)
    y = X @ w_true + 0.5 + rng.standard_normal(N)
    w = Var(rng.standard_normal(P), name="w")
    b = Var(float(rng.standard_normal()), name="b")
    sigma = Var(float(rng.uniform(0.5, 2.0)), name="sigma")
    return RegressionProblem(X, y, w, b, sigma)


def build_regression(problem):
    p = problem
    mean = nodes.matmul(nodes.constant(p.X), p.w) + p.b
    return (stats.normal_lpdf(nodes.constant(p.y), mean, p.sigma)
            + stats.normal_lpdf(p.w, 0.0, 1.0)
            + stats.normal_lpdf(p.b, 0.0, 1.0)
            + stats.uniform_lpdf(p.sigma, 0.1, 10.0))


def tape_regression(problem):
    """Program for :func:`~exprad.tape.tape_grad` over the flat parameters."""
    X, y = problem.X, problem.y
    n, P = X.shape

    def f(theta):
        w, b, sigma = theta[:P], theta[P], theta[P + 1]
        means = [tape.tdot([float(X[i, j]) for j in range(P)], w) + b for i in range(n)]
        return (tape.tnormal_lpdf(list(y), means, sigma)
                + tape.tnormal_lpdf(w, 0.0, 1.0)
                + tape.tnormal_lpdf([b], 0.0, 1.0)
                + tape.tuniform_lpdf([sigma], 0.1, 10.0))

    return f


def baseline_regression(problem, theta=None):
    """Handwritten forward-only log density."""
    theta = problem.params() if theta is None else np.asarray(theta, dtype=np.float64)
    P = problem.P
    w, b, sigma = theta[:P], theta[P], theta[P + 1]
    if not sigma > 0.0:
        raise DomainError("normal scale must be positive")
    r = (problem.y - (problem.X @ w + b)) / sigma
    value = -0.5 * np.dot(r, r) - problem.N * math.log(sigma)
    value += -0.5 * np.dot(w, w) - 0.5 * b * b
    if 0.1 <= sigma <= 10.0:
        value += -math.log(9.9)
    else:
        value = -math.inf
    return float(value)


# ------------------------------------------------------- stochastic volatility

@dataclass
class SVProblem:
    y: np.ndarray
    h_std: Var
    h: Var
    phi: Var
    sigma: Var
    mu: Var

    param_names = ("h_std", "h", "phi", "sigma", "mu")

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.float64).ravel()
        n = self.y.size
        if n < 2:
            raise ShapeError("the volatility model needs at least two observations")
        for v in (self.h_std, self.h):
            if v.shape.kind != nodes.VECTOR or v.shape.size != n:
                raise ShapeError(f"h_std and h must be vectors of length {n}")
        for v in (self.phi, self.sigma, self.mu):
            if not v.shape.is_scalar:
                raise ShapeError("phi, sigma and mu must be scalars")

    @property
    def N(self):
        return self.y.size

    @property
    def variables(self):
        return [self.h_std, self.h, self.phi, self.sigma, self.mu]

    def params(self):
        return np.concatenate([v.values for v in self.variables])

    def set_params(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        n = self.N
        self.h_std.set_value(theta[:n])
        self.h.set_value(theta[n:2 * n])
        self.phi.set_value(theta[2 * n])
        self.sigma.set_value(theta[2 * n + 1])
        self.mu.set_value(theta[2 * n + 2])

    def gradient(self):
        return np.concatenate([v.adjoints for v in self.variables])


def make_sv(N, seed=0):
    rng = _rng(seed)
    y = 0.5 * rng.standard_normal(N)
    return SVProblem(
        y=y,
        h_std=Var(rng.standard_normal(N), name="h_std"),
        h=Var(np.zeros(N), name="h"),
        phi=Var(float(rng.uniform(-0.9, 0.9)), name="phi"),
        sigma=Var(float(rng.uniform(0.5, 1.5)), name="sigma"),
        mu=Var(float(rng.uniform(-1.0, 1.0)), name="mu"),
    )


def build_sv(problem):
    p = problem
    h, phi, mu = p.h, p.phi, p.mu
    steps = [
        nodes.assign(h, p.h_std * p.sigma),
        nodes.assign(h[0], h[0] / nodes.sqrt(1.0 - phi * phi, strict=True)),
        nodes.assign(h, h + mu),
    ]
    steps += [nodes.assign(h[i], phi * (h[i - 1] - mu)) for i in range(1, p.N)]
    density = (stats.normal_lpdf(nodes.constant(p.y), 0.0, nodes.exp(h))
               + stats.normal_lpdf(p.h_std, 0.0, 1.0)
               + stats.cauchy_lpdf(p.sigma, 0.0, SV_PRIOR_SIGMA_SCALE)
               + stats.cauchy_lpdf(p.mu, 0.0, SV_PRIOR_MU_SCALE)
               + stats.uniform_lpdf(phi, -1.0, 1.0))
    return nodes.seq(*steps, density)


def tape_sv(problem):
    y = problem.y
    n = problem.N

    def f(theta):
        h_std = theta[:n]
        phi, sigma, mu = theta[2 * n], theta[2 * n + 1], theta[2 * n + 2]
        h = [hs * sigma for hs in h_std]
        h[0] = h[0] / tape.tsqrt(1.0 - phi * phi, strict=True)
        h = [hi + mu for hi in h]
        for i in range(1, n):
            h[i] = phi * (h[i - 1] - mu)
        scales = [tape.texp(hi) for hi in h]
        return (tape.tnormal_lpdf(list(y), 0.0, scales)
                + tape.tnormal_lpdf(h_std, 0.0, 1.0)
                + tape.tcauchy_lpdf([sigma], 0.0, SV_PRIOR_SIGMA_SCALE)
                + tape.tcauchy_lpdf([mu], 0.0, SV_PRIOR_MU_SCALE)
                + tape.tuniform_lpdf([phi], -1.0, 1.0))

    return f


def sv_transform(problem, theta=None):
    """The listing's h-chain as a plain loop; returns the final h."""
    theta = problem.params() if theta is None else np.asarray(theta, dtype=np.float64)
    n = problem.N
    h_std = theta[:n]
    phi, sigma, mu = theta[2 * n], theta[2 * n + 1], theta[2 * n + 2]
    one_minus = 1.0 - phi * phi
    if not one_minus > 0.0:
        raise DomainError(f"|phi| must be below 1, got phi = {phi}")
    h = h_std * sigma
    h[0] = h[0] / math.sqrt(one_minus)
    h = h + mu
    for i in range(1, n):
        h[i] = phi * (h[i - 1] - mu)
    return h


def baseline_sv(problem, theta=None):
    theta = problem.params() if theta is None else np.asarray(theta, dtype=np.float64)
    n = problem.N
    h_std = theta[:n]
    phi, sigma, mu = theta[2 * n], theta[2 * n + 1], theta[2 * n + 2]
    h = sv_transform(problem, theta)
    z = problem.y * np.exp(-h)
    value = -0.5 * np.dot(z, z) - np.sum(h)
    value += -0.5 * np.dot(h_std, h_std)
    for x, scale in ((sigma, SV_PRIOR_SIGMA_SCALE), (mu, SV_PRIOR_MU_SCALE)):
        value += -math.log(scale) - math.log1p((x / scale) ** 2)
    if -1.0 <= phi <= 1.0:
        value += -math.log(2.0)
    else:
        value = -math.inf
    return float(value)
