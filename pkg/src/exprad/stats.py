"""Log-density nodes: normal, Cauchy and uniform, each up to an additive constant.

Whether a parameter is constant is decided when the node is built (an argument
that is a :class:`~exprad.nodes.Constant`, number or array is constant).  That
is when the constant-only work is done, once:

* ``log(sigma)`` / ``log(gamma)`` for a constant scale;
* for a constant data vector with scalar location and scale, the sufficient
  statistic (mean, biased variance), after which each evaluation is O(1):

      -n / (2 sigma^2) * (S_n^2 + (mean - mu)^2) - n log(sigma)

Dropped constants: ``-(n/2) log(2 pi)`` for the normal, ``-n log(pi)`` for the
Cauchy.  ``sigma`` is always a standard deviation.
"""

import math

import numpy as np

from .core import MATRIX, Expr, Shape, as_expr, seed_slot
from .errors import ConfigError, DomainError, ShapeError
from .nodes import _ONE, Constant, _first


def _check_param(param, x, name):
    if param.shape.kind == MATRIX and not x.shape.kind == MATRIX:
        raise ShapeError(f"{name} with matrix shape is not supported (no covariance lpdf)")
    if not param.shape.is_scalar and param.shape != x.shape:
        raise ShapeError(f"{name} must be scalar or shaped like x ({x.shape}), got {param.shape}")


class NormalLpdf(Expr):
    """sum_i [ -(x_i - mu_i)^2 / (2 sigma_i^2) - log sigma_i ]

    ``mu`` and ``sigma`` are scalars or shaped like ``x``.  A matrix-shaped
    ``sigma`` (a covariance) is rejected at construction.

    Instrumentation: ``stat_passes`` counts per-element passes over constant
    ``x`` and ``log_scale_evals`` counts evaluations of ``log(sigma)`` for a
    constant ``sigma``.
    """

    def __init__(self, x, mu, sigma):
        self.x, self.mu, self.sigma = as_expr(x), as_expr(mu), as_expr(sigma)
        self.children = (self.x, self.mu, self.sigma)
        if self.sigma.shape.kind == MATRIX:
            raise ShapeError("matrix-valued sigma (covariance) is not supported")
        _check_param(self.mu, self.x, "mu")
        _check_param(self.sigma, self.x, "sigma")
        self.shape = Shape.scalar()
        self.n = self.x.shape.size
        self.requires_grad = any(c.requires_grad for c in self.children)

        self.stat_passes = 0
        self.log_scale_evals = 0
        self.sufficient = (isinstance(self.x, Constant) and self.mu.shape.is_scalar
                           and self.sigma.shape.is_scalar)
        if self.sufficient:
            data = self.x.data
            self.stat_passes += 1
            self.mean = float(np.mean(data))
            self.var = float(np.mean((data - self.mean) ** 2))
        self._log_scale = None
        if isinstance(self.sigma, Constant):
            sig = self.sigma.data
            if np.any(sig <= 0.0):
                raise DomainError("normal scale must be positive")
            self.log_scale_evals += 1
            if self.sigma.shape.is_scalar:
                self._log_scale = self.n * math.log(float(sig[0]))
            else:
                self._log_scale = float(np.sum(np.log(sig)))

    def workspace_size(self):
        return 0 if self.sufficient else 2 * self.n

    def _prepare(self):
        self.X, self.MU, self.SIG = self.x.value, self.mu.value, self.sigma.value
        self._v0 = _first(self.value)
        self._xt, self._xc = seed_slot(self.x)
        self._mt, self._mc = seed_slot(self.mu)
        self._st, self._sc = seed_slot(self.sigma)
        self._mt0 = _first(self._mt) if self._mt is not None else None
        if not self.sufficient:
            self.z = self.work[:self.n]
            self.zs = self.work[self.n:]

    def _scale_check(self):
        if self._log_scale is None:
            np.minimum.reduce(self.SIG, out=self._v0)
            if float(self._v0) <= 0.0:
                raise DomainError(f"normal scale must be positive, got {float(self._v0)}")

    def _log_scale_term(self):
        if self._log_scale is not None:
            return self._log_scale
        if self.sigma.shape.is_scalar:
            return self.n * math.log(float(self.SIG[0]))
        np.log(self.SIG, out=self.zs)
        np.add.reduce(self.zs, out=self._v0)
        return float(self._v0)

    def _forward(self):
        self._scale_check()
        if self.sufficient:
            mu = float(self.MU[0])
            sig = float(self.SIG[0])
            d = self.mean - mu
            self._d = d
            self._ssq = self.n * (self.var + d * d) / (sig * sig)
        else:
            z = self.z
            np.subtract(self.X, self.MU, out=z)
            np.divide(z, self.SIG, out=z)
            np.dot(z, z, out=self._v0)
            self._ssq = float(self._v0)
        self.value[0] = -0.5 * self._ssq - self._log_scale_term()

    def _backward(self):
        if self.sufficient:
            return self._backward_sufficient()
        g = self.adjoint
        n = self.n
        zs = self.zs
        np.divide(self.z, self.SIG, out=zs)  # (x - mu) / sigma^2
        t = self._st
        if t is not None:
            if self.sigma.shape.is_scalar:
                t[0] = float(g[0]) * (self._ssq - n) / float(self.SIG[0])
            else:
                np.square(self.z, out=t)
                np.subtract(t, _ONE, out=t)
                np.divide(t, self.SIG, out=t)
                np.multiply(t, g, out=t)
            if self._sc is not None:
                self._sc()
        t = self._mt
        if t is not None:
            if self.mu.shape.is_scalar:
                np.add.reduce(zs, out=self._mt0)
                np.multiply(t, g, out=t)
            else:
                np.multiply(zs, g, out=t)
            if self._mc is not None:
                self._mc()
        t = self._xt
        if t is not None:
            np.multiply(zs, g, out=t)
            np.negative(t, out=t)
            if self._xc is not None:
                self._xc()

    def _backward_sufficient(self):
        g = float(self.adjoint[0])
        sig = float(self.SIG[0])
        if self._st is not None:
            self._st[0] = g * (self._ssq - self.n) / sig
            if self._sc is not None:
                self._sc()
        if self._mt is not None:
            self._mt[0] = g * self.n * self._d / (sig * sig)
            if self._mc is not None:
                self._mc()


class CauchyLpdf(Expr):
    """sum_i [ -log gamma - log(1 + ((x_i - loc) / gamma)^2) ] for scalar loc, gamma."""

    def __init__(self, x, loc, gamma):
        self.x, self.loc, self.gamma = as_expr(x), as_expr(loc), as_expr(gamma)
        self.children = (self.x, self.loc, self.gamma)
        if not (self.loc.shape.is_scalar and self.gamma.shape.is_scalar):
            raise ShapeError("cauchy location and scale must be scalars")
        self.shape = Shape.scalar()
        self.n = self.x.shape.size
        self.requires_grad = any(c.requires_grad for c in self.children)
        self.log_scale_evals = 0
        self._log_gamma = None
        if isinstance(self.gamma, Constant):
            gam = float(self.gamma.data[0])
            if gam <= 0.0:
                raise DomainError("cauchy scale must be positive")
            self.log_scale_evals += 1
            self._log_gamma = math.log(gam)

    def workspace_size(self):
        return 2 * self.n + 1

    def _prepare(self):
        n = self.n
        self.X, self.LOC, self.GAM = self.x.value, self.loc.value, self.gamma.value
        self.z = self.work[:n]
        self.r = self.work[n:2 * n]
        self._t0 = self.work[2 * n:].reshape(())
        self._xt, self._xc = seed_slot(self.x)
        self._lt, self._lc = seed_slot(self.loc)
        self._gt, self._gc = seed_slot(self.gamma)

    def _forward(self):
        gam = float(self.GAM[0])
        if self._log_gamma is None and gam <= 0.0:
            raise DomainError(f"cauchy scale must be positive, got {gam}")
        log_gamma = self._log_gamma if self._log_gamma is not None else math.log(gam)
        z, r = self.z, self.r
        np.subtract(self.X, self.LOC, out=z)
        np.divide(z, self.GAM, out=z)
        np.square(z, out=r)
        np.log1p(r, out=r)
        np.add.reduce(r, out=self._t0)
        self.value[0] = -self.n * log_gamma - float(self._t0)

    def _backward(self):
        g = float(self.adjoint[0])
        gam = float(self.GAM[0])
        z, r = self.z, self.r
        np.square(z, out=r)
        np.add(r, _ONE, out=r)
        np.reciprocal(r, out=r)  # 1 / (1 + z^2)
        if self._gt is not None:
            np.add.reduce(r, out=self._t0)
            self._gt[0] = g * (self.n - 2.0 * float(self._t0)) / gam
            if self._gc is not None:
                self._gc()
        if self._lt is not None:
            np.dot(z, r, out=self._t0)
            self._lt[0] = 2.0 * g * float(self._t0) / gam
            if self._lc is not None:
                self._lc()
        t = self._xt
        if t is not None:
            np.multiply(z, r, out=t)
            self._t0[()] = -2.0 * g / gam
            np.multiply(t, self._t0, out=t)
            if self._xc is not None:
                self._xc()


class UniformLpdf(Expr):
    """-n log(hi - lo) when every element lies in [lo, hi], else -inf.

    The gradient with respect to ``x`` is zero either way; a leaf ``x`` sees
    no adjoint writes at all.
    """

    def __init__(self, x, lo, hi):
        lo, hi = float(lo), float(hi)
        if not lo < hi:
            raise ConfigError(f"uniform bounds need lo < hi, got ({lo}, {hi})")
        self.x = as_expr(x)
        self.children = (self.x,)
        self.lo, self.hi = lo, hi
        self.shape = Shape.scalar()
        self.n = self.x.shape.size
        self.requires_grad = self.x.requires_grad
        self._inside_value = -self.n * math.log(hi - lo)

    def _prepare(self):
        self.X = self.x.value
        self._v0 = _first(self.value)
        t, _ = seed_slot(self.x)
        self._zero = t if (t is not None and not self.x.accumulates) else None

    def _forward(self):
        v0 = self._v0
        np.minimum.reduce(self.X, out=v0)
        inside = float(v0) >= self.lo
        if inside:
            np.maximum.reduce(self.X, out=v0)
            inside = float(v0) <= self.hi
        self.value[0] = self._inside_value if inside else -math.inf

    def _backward(self):
        if self._zero is not None:
            self._zero.fill(0.0)


def normal_lpdf(x, mu, sigma):
    return NormalLpdf(x, mu, sigma)


def cauchy_lpdf(x, loc, gamma):
    return CauchyLpdf(x, loc, gamma)


def uniform_lpdf(x, lo, hi):
    return UniformLpdf(x, lo, hi)
