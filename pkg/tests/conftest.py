import numpy as np
import pytest

from exprad.tape import finite_diff_gradient


def mixed_err(g, ref):
    """max |g - ref| / max(|ref|, 1), the finite-difference comparison metric."""
    g, ref = np.asarray(g, dtype=float), np.asarray(ref, dtype=float)
    return float(np.max(np.abs(g - ref) / np.maximum(np.abs(ref), 1.0)))


def rel_err(g, ref):
    g, ref = np.asarray(g, dtype=float), np.asarray(ref, dtype=float)
    return float(np.max(np.abs(g - ref) / np.maximum(np.abs(ref), 1e-30)))


def engine_fd(bound, variables):
    """Finite-difference gradient of a bound expression's forward value."""
    theta0 = np.concatenate([v.values for v in variables])

    def f(theta):
        off = 0
        for v in variables:
            k = v.values.size
            v.values[:] = theta[off:off + k]
            off += k
        return float(bound.forward().reshape(-1)[0])

    g = finite_diff_gradient(f, theta0)
    f(theta0)
    return g


def engine_grad(bound, variables):
    for v in variables:
        v.reset_adjoints()
    bound.autodiff()
    return np.concatenate([v.adjoints for v in variables])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
