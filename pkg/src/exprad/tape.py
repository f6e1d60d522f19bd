"""A deliberately plain dynamic-tape reverse-mode engine, used as an oracle.

Every scalar operation appends a record ``(out_slot, in_slots, partials)`` with
its local partial derivatives computed on the spot (a Wengert list).  The
reverse sweep walks the records backwards.  There is no fusion, no arena and
no vectorization; this module shares no code with the static engine, so
agreement between the two is evidence of correctness, and its timings are the
"naive" comparator in the benchmarks.

Also here: :func:`finite_diff_gradient`, the black-box central-difference
oracle.
"""

import math

import numpy as np

from .errors import DomainError


class Tape:
    def __init__(self):
        self.values = []
        self.records = []

    def __len__(self):
        return len(self.values)

    def var(self, value):
        """A new independent input."""
        self.values.append(float(value))
        return TapeVar(self, len(self.values) - 1)

    def push(self, value, inputs, partials):
        slot = len(self.values)
        self.values.append(value)
        self.records.append((slot, inputs, partials))
        return TapeVar(self, slot)

    def backward(self, root, seed=1.0):
        """Reverse sweep from ``root``; returns the full adjoint list."""
        adj = [0.0] * len(self.values)
        adj[root.slot] = seed
        for out, inputs, partials in reversed(self.records):
            a = adj[out]
            for i, p in zip(inputs, partials):
                adj[i] += a * p
        return adj

    def is_topological(self):
        return all(all(i < out for i in inputs) for out, inputs, _ in self.records)


def _lift(tape, x):
    if isinstance(x, TapeVar):
        return x
    return tape.var(x)


class TapeVar:
    __slots__ = ("tape", "slot")

    def __init__(self, tape, slot):
        self.tape = tape
        self.slot = slot

    @property
    def value(self):
        return self.tape.values[self.slot]

    def __repr__(self):
        return f"TapeVar(slot={self.slot}, value={self.value!r})"

    def __add__(self, other):
        if isinstance(other, TapeVar):
            return self.tape.push(self.value + other.value, (self.slot, other.slot), (1.0, 1.0))
        return self.tape.push(self.value + other, (self.slot,), (1.0,))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, TapeVar):
            return self.tape.push(self.value - other.value, (self.slot, other.slot), (1.0, -1.0))
        return self.tape.push(self.value - other, (self.slot,), (1.0,))

    def __rsub__(self, other):
        return self.tape.push(other - self.value, (self.slot,), (-1.0,))

    def __mul__(self, other):
        if isinstance(other, TapeVar):
            a, b = self.value, other.value
            return self.tape.push(a * b, (self.slot, other.slot), (b, a))
        return self.tape.push(self.value * other, (self.slot,), (other,))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, TapeVar):
            a, b = self.value, other.value
            return self.tape.push(a / b, (self.slot, other.slot), (1.0 / b, -a / (b * b)))
        return self.tape.push(self.value / other, (self.slot,), (1.0 / other,))

    def __rtruediv__(self, other):
        b = self.value
        return self.tape.push(other / b, (self.slot,), (-other / (b * b),))

    def __neg__(self):
        return self.tape.push(-self.value, (self.slot,), (-1.0,))

    def __pow__(self, other):
        return tpow(self, other)

    def __rpow__(self, other):
        return tpow(_lift(self.tape, other), self)


def _unary(x, value, partial):
    return x.tape.push(value, (x.slot,), (partial,))


def tsin(x):
    return _unary(x, math.sin(x.value), math.cos(x.value))


def tcos(x):
    return _unary(x, math.cos(x.value), -math.sin(x.value))


def ttan(x):
    t = math.tan(x.value)
    return _unary(x, t, 1.0 + t * t)


def texp(x):
    e = math.exp(x.value)
    return _unary(x, e, e)


def tlog(x):
    v = x.value
    if not v > 0.0:
        raise DomainError(f"log of non-positive value {v}")
    return _unary(x, math.log(v), 1.0 / v)


def tsqrt(x, strict=False):
    v = x.value
    if v < 0.0 or (strict and v == 0.0):
        raise DomainError(f"sqrt of {'non-positive' if strict else 'negative'} value {v}")
    r = math.sqrt(v)
    return _unary(x, r, 0.5 / r if r > 0.0 else math.inf)


def tpow(base, exponent):
    if not isinstance(exponent, TapeVar):
        b, r = base.value, float(exponent)
        return _unary(base, b ** r, r * b ** (r - 1.0))
    tape = exponent.tape
    base = _lift(tape, base)
    b, r = base.value, exponent.value
    if not b > 0.0:
        raise DomainError(f"pow with a differentiable exponent needs a positive base, got {b}")
    v = b ** r
    return tape.push(v, (base.slot, exponent.slot), (r * b ** (r - 1.0), v * math.log(b)))


def tsum(xs):
    """One record with n inputs, every partial 1."""
    xs = list(xs)
    tape = xs[0].tape
    return tape.push(math.fsum(x.value for x in xs), tuple(x.slot for x in xs),
                     (1.0,) * len(xs))


def tprod(xs):
    """One record; partials are leave-one-out products (prefix times suffix)."""
    xs = list(xs)
    vals = [x.value for x in xs]
    n = len(vals)
    prefix = [1.0] * (n + 1)
    for i, v in enumerate(vals):
        prefix[i + 1] = prefix[i] * v
    suffix = [1.0] * (n + 1)
    for i in range(n - 1, -1, -1):
        suffix[i] = suffix[i + 1] * vals[i]
    partials = tuple(prefix[i] * suffix[i + 1] for i in range(n))
    return xs[0].tape.push(prefix[n], tuple(x.slot for x in xs), partials)


def tdot(xs, ys):
    return tsum([a * b for a, b in zip(xs, ys)])


def tmatmul(a, b):
    """Product of nested row lists ``a`` (r x k) and ``b`` (k x c)."""
    k = len(b)
    cols = len(b[0])
    return [[tsum([row[t] * b[t][j] for t in range(k)]) for j in range(cols)] for row in a]


def tnormal_lpdf(xs, mu, sigma):
    """Sum of -0.5 ((x - mu) / sigma)^2 - log(sigma); mu, sigma scalars or lists."""
    n = len(xs)
    mus = mu if isinstance(mu, list) else [mu] * n
    sigmas = sigma if isinstance(sigma, list) else [sigma] * n
    terms = []
    for x, m, s in zip(xs, mus, sigmas):
        if isinstance(s, TapeVar):
            if not s.value > 0.0:
                raise DomainError("normal scale must be positive")
            log_s = tlog(s)
        else:
            log_s = math.log(s)
        z = (x - m) / s
        terms.append(-0.5 * (z * z) - log_s)
    return tsum(terms)


def tcauchy_lpdf(xs, loc, gamma):
    terms = []
    for x in xs:
        z = (x - loc) / gamma
        log_g = tlog(gamma) if isinstance(gamma, TapeVar) else math.log(gamma)
        terms.append(-log_g - tlog(1.0 + z * z))
    return tsum(terms)


def tuniform_lpdf(xs, lo, hi):
    tape = xs[0].tape
    inside = all(lo <= x.value <= hi for x in xs)
    value = -len(xs) * math.log(hi - lo) if inside else -math.inf
    return tape.push(value, tuple(x.slot for x in xs), (0.0,) * len(xs))


def tape_grad(f, x):
    """Record ``f`` on a fresh tape at ``x`` and sweep it backwards.

    ``f`` receives a list of :class:`TapeVar` inputs and returns one TapeVar.
    Returns ``(value, gradient)`` with the gradient as a float array.
    """
    tape = Tape()
    inputs = [tape.var(v) for v in np.asarray(x, dtype=np.float64).ravel()]
    out = f(inputs)
    adj = tape.backward(out)
    return out.value, np.array([adj[v.slot] for v in inputs])


def finite_diff_gradient(f, x, h=1e-6):
    """Central differences of black-box ``f`` at ``x``.

    The step for coordinate i is ``h * max(1, |x_i|)``; the divisor is the
    actual representable distance between the two probe points.
    """
    x = np.array(x, dtype=np.float64).ravel()
    g = np.empty_like(x)
    probe = x.copy()
    for i, xi in enumerate(x):
        step = h * max(1.0, abs(xi))
        hi, lo = xi + step, xi - step
        probe[i] = hi
        f_hi = f(probe)
        probe[i] = lo
        f_lo = f(probe)
        probe[i] = xi
        g[i] = (f_hi - f_lo) / (hi - lo)
    return g
