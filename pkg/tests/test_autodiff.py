import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import central_fd, rel_err
from gfm import autodiff as ad
from gfm import special
from gfm.errors import ContractError, DomainError
from gfm.manifolds import Sphere2

# (primitive, sampler of inputs strictly inside the domain)
UNARY = {
    "sin": (ad.sin, lambda r, n: r.uniform(-4, 4, n)),
    "cos": (ad.cos, lambda r, n: r.uniform(-4, 4, n)),
    "exp": (ad.exp, lambda r, n: r.uniform(-3, 3, n)),
    "log": (ad.log, lambda r, n: r.uniform(0.1, 5, n)),
    "sqrt": (ad.sqrt, lambda r, n: r.uniform(0.1, 5, n)),
    "tanh": (ad.tanh, lambda r, n: r.uniform(-3, 3, n)),
    "artanh": (ad.artanh, lambda r, n: r.uniform(-0.9, 0.9, n)),
    "silu": (ad.silu, lambda r, n: r.uniform(-6, 6, n)),
    "square": (ad.square, lambda r, n: r.uniform(-3, 3, n)),
    "wrap_angle": (ad.wrap_angle, lambda r, n: r.uniform(0.1, 6.1, n) + 2 * np.pi * r.integers(-2, 3, n)),
    "cos_sqrt": (special.cos_sqrt, lambda r, n: r.uniform(0, 9, n)),
    "sinc_sqrt": (special.sinc_sqrt, lambda r, n: r.uniform(0, 9, n)),
    "versinc_sqrt": (special.versinc_sqrt, lambda r, n: r.uniform(0, 9, n)),
    "tanhc_sqrt": (special.tanhc_sqrt, lambda r, n: r.uniform(0, 9, n)),
    "asin_sq": (special.asin_sq, lambda r, n: r.uniform(0, 0.95, n)),
    "asinh_sq": (special.asinh_sq, lambda r, n: r.uniform(0, 9, n)),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_forward_and_reverse_match_fd(name):
    f, sampler = UNARY[name]
    rng = np.random.default_rng(hash(name) % 2**32)
    x = sampler(rng, 1000)
    ones = np.ones_like(x)
    fd = central_fd(lambda y: ad.evaluate(f, y), x, ones)
    _, tangent = ad.jvp(f, [x], [ones])
    _, (g,) = ad.value_and_grad(lambda p: ad.sum(f(p[0])), [x])
    scale = np.maximum(np.abs(fd), 1.0)
    assert np.max(np.abs(tangent - fd) / scale) < 1e-4
    assert np.max(np.abs(g - fd) / scale) < 1e-4


@pytest.mark.parametrize("name", ["sin", "tanh", "silu", "log", "artanh", "sinc_sqrt", "asinh_sq"])
def test_second_derivative_by_forward_over_reverse_data(name):
    # d/dx of the forward tangent, reverse mode over a Dual; checks the deriv chain
    f, sampler = UNARY[name]
    x = sampler(np.random.default_rng(3), 200)
    ones = np.ones_like(x)

    def dfdx(y):
        return ad.jvp(f, [y], [np.ones_like(ad.value(y))])[1]

    _, (g,) = ad.value_and_grad(lambda p: ad.sum(dfdx(p[0])), [x])
    fd = central_fd(lambda y: ad.value(dfdx(y)), x, ones)
    assert np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1.0)) < 1e-4


BINARY = {
    "add": ad.add,
    "sub": ad.sub,
    "mul": ad.mul,
    "div": lambda a, b: ad.div(a, ad.add(ad.mul(b, b), 0.5)),
}


@pytest.mark.parametrize("name", sorted(BINARY))
def test_binary_primitives_match_fd(name):
    f = BINARY[name]
    rng = np.random.default_rng(7)
    a, b = rng.normal(size=(2, 1000))
    da, db = rng.normal(size=(2, 1000))
    fd = (ad.evaluate(f, a + 1e-5 * da, b + 1e-5 * db) - ad.evaluate(f, a - 1e-5 * da, b - 1e-5 * db)) / 2e-5
    _, t = ad.jvp(f, [a, b], [da, db])
    assert rel_err(t, fd) < 1e-4
    _, (ga, gb) = ad.value_and_grad(lambda p: ad.sum(f(p[0], p[1])), [a, b])
    assert rel_err(ga * da + gb * db, fd) < 1e-4


def test_matmul_linear_reductions_match_fd(rng):
    w = rng.normal(size=(5, 3))
    b = rng.normal(size=3)
    x = rng.normal(size=(7, 5))

    def f(p):
        h = ad.linear(p[0], p[1], p[2])
        h = ad.concatenate([h, ad.matmul(p[0], p[1])], axis=-1)
        return ad.sum(ad.mul(ad.norm(h), ad.mean(ad.tanh(h), axis=0, keepdims=True)))

    _, grads = ad.value_and_grad(f, [x, w, b])
    for k, base in enumerate([x, w, b]):
        d = rng.normal(size=base.shape)

        def fk(y, k=k):
            args = [x, w, b]
            args[k] = y
            return ad.value(f(args))

        assert rel_err(np.sum(grads[k] * d), central_fd(fk, base, d)) < 1e-4


def test_getitem_reshape_swapaxes_where_clip(rng):
    x = rng.normal(size=(4, 3, 3))
    mask = rng.uniform(size=(4, 3, 3)) > 0.5

    def f(p):
        y = ad.swapaxes(p[0], -1, -2)
        y = ad.reshape(y, (4, 9))[:, 2:7]
        y = ad.where(mask.reshape(4, 9)[:, 2:7], ad.clip(y, -0.5, 0.8), ad.square(y))
        return ad.sum(ad.mul(y, y))

    _, (g,) = ad.value_and_grad(f, [x])
    d = rng.normal(size=x.shape)
    assert rel_err(np.sum(g * d), central_fd(lambda y: ad.value(f([y])), x, d)) < 1e-4


def test_worked_examples_evaluate():
    assert ad.evaluate(lambda x: ad.mul(x, x), 3.0) == 9.0
    assert ad.evaluate(ad.sin, 0.0) == 0.0
    m = Sphere2()
    y = ad.evaluate(m.exp, [0.0, 0.0, 1.0], [np.pi / 2, 0.0, 0.0])
    assert np.allclose(y, [1.0, 0.0, 0.0], atol=1e-15)


def test_worked_examples_gradient():
    # loss = stopgrad(x) * x at x=2 -> 2
    _, (g,) = ad.value_and_grad(lambda p: ad.mul(ad.stop_gradient(p[0]), p[0]), [np.array(2.0)])
    assert g == 2.0
    # |W u|^2 -> 2 (W u) u^T
    rng = np.random.default_rng(0)
    w, u = rng.normal(size=(3, 4)), rng.normal(size=(4, 1))
    _, (gw,) = ad.value_and_grad(lambda p: ad.sum(ad.square(ad.matmul(p[0], u))), [w])
    assert np.allclose(gw, 2 * (w @ u) @ u.T, rtol=1e-13)


def test_worked_examples_jvp():
    assert ad.jvp(lambda x: ad.mul(x, x), [np.array(3.0)], [np.array(1.0)])[1] == 6.0
    rng = np.random.default_rng(1)
    x = rng.normal(size=5)
    _, t = ad.jvp(lambda y: ad.sin(ad.mul(y, y)), [x], [np.zeros(5)])
    assert np.all(t == 0.0)


def test_sphere_exp_time_jvp_at_diagonal_equals_velocity(rng):
    m = Sphere2()
    x = m.sample_uniform(rng, 50)
    v = m.proj(x, rng.normal(size=(50, 3)))
    s = 0.3
    _, dx = ad.jvp(lambda t: m.exp(x, ad.mul(ad.sub(t, s), v)), [np.full((50, 1), s)], [np.ones((50, 1))])
    assert np.max(np.abs(dx - v)) < 1e-12
    fd = central_fd(lambda t: m.exp(x, (t - s) * v), np.full((50, 1), s), np.ones((50, 1)))
    assert rel_err(dx, fd) < 1e-4


def test_stop_gradient_examples():
    _, (g,) = ad.value_and_grad(lambda p: ad.stop_gradient(ad.square(p[0])), [np.array(3.0)])
    assert g == 0.0
    assert ad.evaluate(lambda x: ad.stop_gradient(ad.square(x)), 3.0) == 9.0
    _, (g,) = ad.value_and_grad(lambda p: ad.mul(p[0], ad.stop_gradient(p[0])), [np.array(2.0)])
    assert g == 2.0


def test_stop_gradient_zeroes_forward_tangent():
    out, t = ad.jvp(lambda x: ad.add(ad.stop_gradient(ad.square(x)), x), [np.array(3.0)], [np.array(1.0)])
    assert ad.value(out) == 12.0 and t == 1.0


def test_reverse_over_forward_matches_fd_of_composite(rng):
    # L(w) = sum (d/dt tanh(w t x))^2, derivative of a JVP w.r.t. parameters
    x = rng.normal(size=(6, 1))
    t0 = rng.uniform(size=(6, 1))
    w = rng.normal(size=(1, 4))

    def loss(p):
        _, dt = ad.jvp(lambda t: ad.tanh(ad.matmul(ad.mul(t, x), p[0])), [t0], [np.ones_like(t0)])
        return ad.sum(ad.square(dt))

    _, (g,) = ad.value_and_grad(loss, [w])
    d = rng.normal(size=w.shape)
    assert rel_err(np.sum(g * d), central_fd(lambda y: ad.value(loss([y])), w, d)) < 1e-6


def test_contract_errors():
    with pytest.raises(ContractError):
        ad.value_and_grad(lambda p: ad.mul(p[0], 2.0), [np.ones(3)])
    with pytest.raises(ContractError):
        ad.jvp(lambda x: x, [np.ones(3)], [np.ones(2)])
    with pytest.raises(DomainError):
        ad.evaluate(ad.artanh, 1.0)
    with pytest.raises(DomainError):
        ad.evaluate(ad.log, -1.0)


def test_gradient_is_deterministic(rng):
    x = rng.normal(size=(64, 8))
    w = rng.normal(size=(8, 8))

    def f(p):
        return ad.sum(ad.silu(ad.matmul(ad.silu(ad.matmul(x, p[0])), p[0])))

    g1 = ad.value_and_grad(f, [w])[1][0]
    g2 = ad.value_and_grad(f, [w])[1][0]
    assert g1.tobytes() == g2.tobytes()


@given(
    a=st.floats(-3, 3),
    b=st.floats(-3, 3),
    x=st.floats(-2, 2),
)
def test_tangent_is_linear(a, b, x):
    f = lambda y: ad.mul(ad.sin(y), ad.exp(y))  # noqa: E731
    x = np.array(x)
    _, t1 = ad.jvp(f, [x], [np.array(1.0)])
    _, tab = ad.jvp(f, [x], [np.array(a + b)])
    assert abs(tab - (a + b) * t1) <= 1e-12 * (1 + abs(tab))
