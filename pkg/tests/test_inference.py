import numpy as np
import pytest
import scipy.linalg

from gfm import autodiff as ad
from gfm.data import get_prior
from gfm.errors import UnsupportedError
from gfm.inference import (
    density_grid,
    density_lattice,
    integrate_flow,
    log_likelihood,
    quadrature_mass,
    riemannian_divergence,
    sample_few_step,
    write_density_csv,
)
from gfm.manifolds import _GENERATORS, SO3, FlatTorus, PoincareBall, Sphere2, hat
from gfm.model import AffineField, Arch, FieldModel, VelocityField

SMALL = Arch(hidden=16, layers=2, emb=8, max_freq=20.0)


def random_params(model, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    return [scale * rng.normal(size=p.shape) / np.sqrt(p.shape[0]) for p in model.init_params(seed)]


def ball_points(m, rng, n, r=0.8):
    g = rng.normal(size=(n, m.dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True) * rng.uniform(0, r, (n, 1))


# ---------------------------------------------------------------------------
# few-step sampling


@pytest.mark.parametrize("m", [FlatTorus(2), Sphere2(), SO3(), PoincareBall(3)], ids=repr)
def test_nfe_accounting_and_single_step(m, rng):
    model = VelocityField(m, SMALL)
    p = random_params(model, 0)
    x0 = get_prior(m).sample(rng, 50)
    for k in (1, 2, 5):
        before = model.nfe
        x = sample_few_step(model, p, x0, k)
        assert model.nfe - before == k
        assert np.max(m.point_error(x)) < 1e-9
    assert np.array_equal(sample_few_step(model, p, x0, 1), model.flow_map(p, 0.0, 1.0, x0))
    zero = model.init_params(0)
    assert np.array_equal(sample_few_step(model, zero, x0, 3), x0)
    with pytest.raises(ValueError):
        sample_few_step(model, p, x0, 0)


def test_one_pair_oracle_lands_on_target():
    m = FlatTorus(2)
    x0, x1 = np.array([[0.3, 5.9]]), np.array([[2.0, 0.4]])
    model = AffineField(m)
    params = [m.log(x0[0], x1[0]), np.zeros((2, 2))]
    for k in (1, 2, 4):
        x = sample_few_step(model, params, x0, k)
        assert np.max(np.abs(m.log(x, x1))) < 1e-9


def test_integrate_flow_zero_field_and_great_circle():
    m = Sphere2()
    model = AffineField(m)
    x0 = np.array([[1.0, 0.0, 0.0]])
    assert np.array_equal(integrate_flow(model, [np.zeros(3), np.zeros((3, 3))], x0, 10), x0)
    # unit angular speed about z: after unit time the arc length is 1
    x = integrate_flow(model, [np.zeros(3), hat([0, 0, 1.0])], x0, 100)
    assert np.linalg.norm(x[0] - [np.cos(1.0), np.sin(1.0), 0.0]) < 1e-3


def _swirl(m):
    """Smooth non-autonomous field on the sphere."""

    def fn(params, s, t, x):
        xv = ad.value(x) if ad.is_traced(x) else np.asarray(x)
        return np.cross([0.3, 1.0, 0.2], xv) + np.asarray(t) * np.sin(3 * xv)

    return FieldModel(m, fn)


def test_euler_error_halves_with_step():
    m = Sphere2()
    model = _swirl(m)
    x0 = m.sample_uniform(np.random.default_rng(0), 20)
    ref = integrate_flow(model, None, x0, 6400)
    errs = [np.max(np.reshape(m.dist(integrate_flow(model, None, x0, n), ref), -1)) for n in (50, 100, 200)]
    assert 1.7 < errs[0] / errs[1] < 2.3
    assert 1.7 < errs[1] / errs[2] < 2.3


def test_backward_then_forward_is_first_order_reversible():
    m = Sphere2()
    model = _swirl(m)
    x1 = m.sample_uniform(np.random.default_rng(1), 20)
    errs = []
    for n in (100, 200):  # h = 1e-2 and 5e-3
        x0 = integrate_flow(model, None, x1, n, 1.0, 0.0)
        back = integrate_flow(model, None, x0, n, 0.0, 1.0)
        errs.append(np.max(np.reshape(m.dist(back, x1), -1)))
    assert 1.7 < errs[0] / errs[1] < 2.3


# ---------------------------------------------------------------------------
# divergence


def test_divergence_examples():
    m = FlatTorus(2)
    x = np.random.default_rng(0).uniform(0, 2 * np.pi, (100, 2))
    model = FieldModel(m, lambda p, s, t, y: ad.concatenate([ad.sin(y[..., :1]), ad.mul(y[..., 1:], 0.0)], -1))
    assert np.allclose(riemannian_divergence(model, None, 0.5, x), np.cos(x[:, 0]), atol=1e-14)
    zero = VelocityField(Sphere2(), SMALL)
    pts = Sphere2().sample_uniform(np.random.default_rng(1), 10)
    assert np.all(riemannian_divergence(zero, zero.init_params(0), 0.3, pts) == 0)


def test_sphere_divergence_matches_flux_through_small_circle():
    m = Sphere2()
    model = VelocityField(m, SMALL)
    p = random_params(model, 1, scale=2.0)
    x = m.sample_uniform(np.random.default_rng(2), 8)
    div = riemannian_divergence(model, p, 0.4, x)
    r, k = 0.02, 720
    phi = (np.arange(k) + 0.5) * 2 * np.pi / k
    frame = m.frame(x)
    for i in range(len(x)):
        e = np.cos(phi)[:, None] * frame[i, 0] + np.sin(phi)[:, None] * frame[i, 1]
        y = np.cos(r) * x[i] + np.sin(r) * e
        normal = -np.sin(r) * x[i] + np.cos(r) * e  # outward unit normal of the geodesic circle
        v = model.velocity(p, 0.4, 0.4, y)
        flux = np.sum(np.sum(v * normal, axis=1)) * np.sin(r) * (2 * np.pi / k)
        oracle = flux / (2 * np.pi * (1 - np.cos(r)))
        assert abs(div[i] - oracle) <= 1e-2 * max(1.0, abs(oracle)), (div[i], oracle)


def test_poincare_divergence_matches_chart_formula():
    m = PoincareBall(3)
    model = VelocityField(m, SMALL)
    p = random_params(model, 3, scale=2.0)
    x = ball_points(m, np.random.default_rng(3), 20)
    n = m.dim

    def flux_density(y):
        lam = 2.0 / (1.0 - np.sum(y * y, axis=1, keepdims=True))
        return lam**n * model.velocity(p, 0.7, 0.7, y)

    h = 1e-6
    oracle = np.zeros(len(x))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        oracle += (flux_density(x + e)[:, i] - flux_density(x - e)[:, i]) / (2 * h)
    oracle /= (2.0 / (1.0 - np.sum(x * x, axis=1))) ** n
    got = riemannian_divergence(model, p, 0.7, x)
    assert np.max(np.abs(got - oracle) / np.maximum(1.0, np.abs(oracle))) < 1e-6


def test_so3_divergence_matches_left_invariant_frame_formula():
    # with orthonormal left-invariant fields E_i, div v = sum_i E_i <v, E_i>
    m = SO3()
    model = VelocityField(m, SMALL)
    p = random_params(model, 4, scale=2.0)
    x = m.sample_uniform(np.random.default_rng(4), 10)
    got = riemannian_divergence(model, p, 0.2, x)
    h = 1e-6
    for j, xr in enumerate(x):
        R = xr.reshape(3, 3)
        total = 0.0
        for G in _GENERATORS:
            vals = []
            for eps in (h, -h):
                Re = R @ scipy.linalg.expm(eps * G)
                v = model.velocity(p, 0.2, 0.2, Re.ravel()[None])[0].reshape(3, 3)
                vals.append(0.5 * np.trace(v.T @ (Re @ G)))
            total += (vals[0] - vals[1]) / (2 * h)
        assert abs(got[j] - total) < 1e-6 * max(1.0, abs(total))


# ---------------------------------------------------------------------------
# likelihood


def test_zero_field_log_likelihood_is_log_uniform_density():
    for m, expected in ((Sphere2(), -np.log(4 * np.pi)), (FlatTorus(2), -2 * np.log(2 * np.pi))):
        model = VelocityField(m, SMALL)
        x = m.sample_uniform(np.random.default_rng(0), 100)
        ll = log_likelihood(model, model.init_params(0), x, get_prior(m))
        assert np.allclose(ll, expected, atol=1e-12)
    assert abs(np.log(4 * np.pi) - 2.5310) < 1e-3
    assert abs(2 * np.log(2 * np.pi) - 3.6757) < 1e-3


def _bounded_ball_field(params, s, t, x):
    """Affine field damped by 1/lambda, so hyperbolic speed stays bounded."""
    damp = ad.mul(ad.sub(1.0, ad.sum(ad.mul(x, x), axis=-1, keepdims=True)), 0.5)
    kx = ad.sum(ad.mul(np.array([[0.4, -0.9], [0.7, 0.2]]), ad.reshape(x, np.shape(ad.value(x))[:-1] + (1, 2))), -1)
    return ad.mul(damp, ad.add(kx, np.array([0.5, -0.3])))


@pytest.mark.parametrize("m", [FlatTorus(2), Sphere2(), PoincareBall(2)], ids=repr)
def test_density_quadrature_normalises(m):
    prior = get_prior(m)
    if isinstance(m, PoincareBall):
        model, p = FieldModel(m, _bounded_ball_field), None
        zero, zp = VelocityField(m, SMALL), VelocityField(m, SMALL).init_params(0)
    else:
        model = zero = VelocityField(m, SMALL)
        p, zp = random_params(model, 5, scale=1.0), model.init_params(0)
    _, ld0, w = density_grid(zero, zp, prior, 120, n_steps=10)
    assert abs(quadrature_mass(ld0, w) - 1.0) < 1e-3
    errs = []
    for n in (50, 100):
        _, ld, w = density_grid(model, p, prior, 120, n_steps=n)
        errs.append(abs(quadrature_mass(ld, w) - 1.0))
    assert errs[1] < 0.02
    # the residual is Euler discretisation error: it shrinks with the step
    assert errs[1] < 0.7 * errs[0] or errs[1] < 1e-3


def test_density_lattice_shapes_and_unsupported(tmp_path):
    pts, coords, w = density_lattice(FlatTorus(2), 10)
    assert pts.shape == coords.shape == (100, 2) and np.isclose(w.sum(), (2 * np.pi) ** 2)
    assert np.all((coords > -np.pi) & (coords <= np.pi))
    pts, coords, w = density_lattice(Sphere2(), 30)
    assert np.allclose(np.linalg.norm(pts, axis=1), 1.0) and abs(w.sum() - 4 * np.pi) < 0.01
    for bad in (SO3(), FlatTorus(3), PoincareBall(3)):
        with pytest.raises(UnsupportedError):
            density_lattice(bad, 10)
    write_density_csv(tmp_path / "d.csv", coords[:3], np.array([-1.0, -2.0, -3.0]))
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "coord1,coord2,log_density" and len(lines) == 4


def test_poincare_clip_diagnostics():
    m = PoincareBall(2)
    model = FieldModel(m, lambda p, s, t, x: ad.mul(x, -50.0))  # strong outward drift backwards in time
    diag = {}
    with pytest.warns(RuntimeWarning):
        log_likelihood(model, None, np.full((20, 2), 0.6), get_prior(m), n_steps=20, diagnostics=diag)
    assert diag["radius_clips"] > 10
