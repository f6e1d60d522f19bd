import math

import numpy as np
import pytest

import exprad as ad
from exprad.instrument import count_allocations
from exprad.stats import NormalLpdf

from op_catalogue import fd_worst


# ------------------------------------------------------------------ normal

def test_normal_at_origin():
    assert ad.bind(ad.normal_lpdf(ad.Var([0.0]), 0.0, 1.0)).autodiff() == 0.0


def test_normal_direct_and_sufficient_forms_agree_by_hand():
    direct = ad.bind(ad.normal_lpdf(ad.Var([1.0, -1.0]), 0.0, 1.0)).autodiff()
    suff_node = ad.normal_lpdf(np.array([1.0, -1.0]), ad.Var(0.0), ad.Var(1.0))
    assert suff_node.sufficient
    assert direct == -1.0
    assert ad.bind(suff_node).autodiff() == -1.0


def test_normal_benchmark_configuration_caches_log_sigma():
    x = ad.Var(np.linspace(-1, 1, 8))
    node = ad.normal_lpdf(x, -0.56, 1.37)
    b = ad.bind(node)
    for _ in range(3):
        b.autodiff()
    assert node.log_scale_evals == 1
    expect = -0.5 * np.sum(((x.value + 0.56) / 1.37) ** 2) - 8 * math.log(1.37)
    assert b.autodiff() == pytest.approx(expect, rel=1e-14)
    assert x.grad / 4 == pytest.approx(-(x.value + 0.56) / 1.37 ** 2, rel=1e-14)


def test_normal_gradient_formulas(rng):
    xv = rng.normal(size=6)
    x, mu, sigma = ad.Var(xv), ad.Var(0.2), ad.Var(1.3)
    ad.bind(ad.normal_lpdf(x, mu, sigma)).autodiff()
    r = xv - 0.2
    assert float(mu.grad) == pytest.approx(np.sum(r) / 1.3 ** 2, rel=1e-13)
    assert float(sigma.grad) == pytest.approx(np.sum(r ** 2) / 1.3 ** 3 - 6 / 1.3, rel=1e-13)
    assert x.grad == pytest.approx(-r / 1.3 ** 2, rel=1e-13)


def test_two_forms_agree_on_random_instances(rng):
    for _ in range(200):
        n = int(rng.integers(1, 65))
        data = rng.normal(rng.normal(), rng.uniform(0.1, 3), n)
        m, s = rng.normal(), rng.uniform(0.2, 4)
        mu1, s1 = ad.Var(m), ad.Var(s)
        mu2, s2 = ad.Var(m), ad.Var(s)
        fast = ad.normal_lpdf(data, mu1, s1)
        slow = ad.normal_lpdf(ad.Var(data), mu2, s2)
        assert fast.sufficient and not slow.sufficient
        vf, vs = ad.bind(fast).autodiff(), ad.bind(slow).autodiff()
        assert abs(vf - vs) <= 1e-10 * abs(vs)
        for a, b in ((mu1, mu2), (s1, s2)):
            assert abs(float(a.grad) - float(b.grad)) <= 1e-8 * max(abs(float(b.grad)), 1.0)


def test_sufficient_statistic_computed_once():
    node = ad.normal_lpdf(np.arange(10.0), ad.Var(1.0), ad.Var(2.0))
    b = ad.bind(node)
    for _ in range(5):
        b.autodiff()
    assert node.stat_passes == 1
    assert node.mean == 4.5 and node.var == pytest.approx(8.25)


def test_cache_flags_follow_constness():
    x = ad.Var(np.ones(3))
    assert not ad.normal_lpdf(x, 0.0, ad.Var(1.0)).sufficient
    assert ad.normal_lpdf(x, 0.0, ad.Var(1.0))._log_scale is None
    assert ad.normal_lpdf(x, 0.0, 2.0)._log_scale == pytest.approx(3 * math.log(2.0))
    assert not ad.normal_lpdf(np.ones(3), ad.Var(np.zeros(3)), 1.0).sufficient


def test_normal_vector_scale():
    y = np.array([0.3, -1.2])
    h = ad.Var([0.1, -0.4])
    v = ad.bind(ad.normal_lpdf(y, 0.0, ad.exp(h))).autodiff()
    s = np.exp(h.value)
    assert v == pytest.approx(np.sum(-0.5 * (y / s) ** 2 - h.value), rel=1e-14)
    assert h.grad == pytest.approx((y / s) ** 2 - 1.0, rel=1e-13)


def test_normal_rejects_matrix_sigma_and_bad_shapes():
    x = ad.Var(np.ones(2))
    with pytest.raises(ad.ShapeError):
        NormalLpdf(x, 0.0, ad.Var(np.eye(2)))
    with pytest.raises(ad.ShapeError):
        ad.normal_lpdf(x, ad.Var(np.zeros(3)), 1.0)


@pytest.mark.parametrize("sigma", [0.0, -1.0])
def test_normal_nonpositive_sigma(sigma):
    with pytest.raises(ad.DomainError):
        ad.normal_lpdf(ad.Var([0.0]), 0.0, sigma)
    s = ad.Var(sigma)
    with pytest.raises(ad.DomainError):
        ad.bind(ad.normal_lpdf(ad.Var([0.0]), 0.0, s)).forward()
    with pytest.raises(ad.DomainError):
        ad.bind(ad.normal_lpdf(np.zeros(2), 0.0, s)).forward()


# ------------------------------------------------------------------ cauchy

def test_cauchy_at_mode():
    x = ad.Var([0.0])
    assert ad.bind(ad.cauchy_lpdf(x, 0.0, 1.0)).autodiff() == 0.0
    assert x.grad.tolist() == [0.0]


def test_cauchy_at_one():
    x = ad.Var([1.0])
    assert ad.bind(ad.cauchy_lpdf(x, 0.0, 1.0)).autodiff() == pytest.approx(-math.log(2.0))
    assert x.grad.tolist() == [-1.0]


def test_cauchy_scale_five():
    from conftest import engine_fd, engine_grad, mixed_err
    x, loc, g = ad.Var([0.0, 0.0]), ad.Var(0.0), ad.Var(5.0)
    b = ad.bind(ad.cauchy_lpdf(x, loc, g))
    assert b.autodiff() == pytest.approx(-2 * math.log(5.0))
    assert mixed_err(engine_grad(b, [x, loc, g]), engine_fd(b, [x, loc, g])) <= 1e-6


def test_cauchy_caches_log_gamma_and_checks_domain():
    node = ad.cauchy_lpdf(ad.Var([1.0, 2.0]), 0.0, 5.0)
    b = ad.bind(node)
    b.autodiff()
    b.autodiff()
    assert node.log_scale_evals == 1
    with pytest.raises(ad.DomainError):
        ad.cauchy_lpdf(ad.Var([1.0]), 0.0, 0.0)
    with pytest.raises(ad.DomainError):
        ad.bind(ad.cauchy_lpdf(ad.Var([1.0]), 0.0, ad.Var(-1.0))).forward()
    with pytest.raises(ad.ShapeError):
        ad.cauchy_lpdf(ad.Var([1.0]), ad.Var([0.0, 1.0]), 1.0)


# ------------------------------------------------------------------ uniform

def test_uniform_inside_support():
    x = ad.Var([0.0])
    assert ad.bind(ad.uniform_lpdf(x, -1.0, 1.0)).autodiff() == pytest.approx(-math.log(2.0))
    assert x.grad.tolist() == [0.0]
    assert ad.bind(ad.uniform_lpdf(ad.Var([0.5, 0.5]), 0.0, 1.0)).autodiff() == 0.0


def test_uniform_outside_support_no_writes():
    x = ad.Var([0.0])
    x.adjoints[:] = 7.0
    b = ad.bind(ad.uniform_lpdf(x, 0.1, 10.0))
    assert b.autodiff() == -math.inf
    assert x.grad.tolist() == [7.0]


def test_uniform_zeroes_internal_child_seed():
    x = ad.Var([3.0])
    v = ad.bind(ad.uniform_lpdf(x * 2.0, 0.0, 1.0) + ad.sum(x)).autodiff()
    assert v == -math.inf
    assert x.grad.tolist() == [1.0]


@pytest.mark.parametrize("lo,hi", [(1.0, 1.0), (2.0, 1.0)])
def test_uniform_bad_bounds(lo, hi):
    with pytest.raises(ad.ConfigError):
        ad.uniform_lpdf(ad.Var([0.0]), lo, hi)


# ------------------------------------------------------------------ gradients

@pytest.mark.parametrize("name", ["normal_lpdf", "normal_lpdf_vector_params", "cauchy_lpdf",
                                  "uniform_lpdf"])
def test_lpdf_gradients_match_fd(name):
    assert fd_worst(name, points=100) <= 1e-6


def test_sufficient_path_gradient_matches_fd():
    from conftest import engine_fd, engine_grad, mixed_err
    rng = np.random.default_rng(3)
    mu, s = ad.Var(0.1), ad.Var(1.4)
    b = ad.bind(ad.normal_lpdf(rng.normal(size=20), mu, s))
    assert mixed_err(engine_grad(b, [mu, s]), engine_fd(b, [mu, s])) <= 1e-6


def test_sufficient_path_does_not_allocate():
    mu, s = ad.Var(0.1), ad.Var(1.4)
    b = ad.bind(ad.normal_lpdf(np.arange(50.0), mu, s))
    with count_allocations() as c:
        b.forward()
        b.backward()
    assert c.count == 0
