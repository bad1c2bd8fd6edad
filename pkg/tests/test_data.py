from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gfm import data as gdata
from gfm.errors import ConfigError, ContractError, ParseError, UnsupportedPriorError
from gfm.manifolds import SO3, FlatTorus, ManifoldSpec, PoincareBall, Sphere2, get_manifold

REPO = Path(__file__).resolve().parent.parent
ALL = [FlatTorus(2), FlatTorus(7), Sphere2(), SO3(), PoincareBall(2), PoincareBall(3)]


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_geodata_examples(tmp_path):
    p = write(tmp_path, "g.csv", "lat,lon\n90,123.4\n0,0\n0,90\n-45,-180\n")
    ds = gdata.load_geodata_csv(p)
    assert isinstance(ds.manifold, Sphere2) and len(ds) == 4
    assert np.allclose(ds.points[0], [0, 0, 1], atol=1e-15)
    assert np.allclose(ds.points[1], [1, 0, 0], atol=1e-15)
    assert np.allclose(ds.points[2], [0, 1, 0], atol=1e-15)
    assert np.max(np.abs(np.linalg.norm(ds.points, axis=1) - 1)) < 1e-12


@pytest.mark.parametrize(
    "text,line",
    [
        ("lat,lon\n10,20\n95,0\n", 3),
        ("lat,lon\n10,20\n\n0,200\n", 4),
        ("lat,lon\n1,2\nabc,3\n", 3),
        ("lat,lon\n1,2,3\n", 2),
    ],
)
def test_geodata_errors_carry_line_numbers(tmp_path, text, line):
    p = write(tmp_path, "bad.csv", text)
    with pytest.raises(ParseError, match=f":{line}:"):
        gdata.load_geodata_csv(p)


def test_geodata_header_and_empty(tmp_path):
    with pytest.raises(ParseError):
        gdata.load_geodata_csv(write(tmp_path, "h.csv", "lon,lat\n1,2\n"))
    with pytest.raises(ParseError):
        gdata.load_geodata_csv(write(tmp_path, "e.csv", ""))


def test_angles_wrapping(tmp_path):
    p = write(tmp_path, "a.csv", f"phi,psi\n{-np.pi / 2!r},{np.pi!r}\n0,0\n")
    ds = gdata.load_angles_csv(p, 2)
    assert np.allclose(ds.points[0], [3 * np.pi / 2, np.pi], atol=1e-15)
    assert np.array_equal(ds.points[1], [0.0, 0.0])
    with pytest.raises(ParseError, match=":2:"):
        gdata.load_angles_csv(write(tmp_path, "b.csv", "a,b,c\n1,2\n"), 3)


@given(x=st.floats(-50, 50))
def test_wrap_is_periodic(x):
    m = FlatTorus(1)
    a = m.project_point(np.array([x]))
    b = m.project_point(np.array([x + 2 * np.pi]))
    assert 0 <= a[0] < 2 * np.pi
    assert abs(float(m.log(a, b)[0])) < 1e-12


@pytest.mark.parametrize("m", ALL, ids=repr)
def test_mixture_rows_invariants_and_determinism(m):
    ds = gdata.synth_wrapped_mixture(m, 3, 10.0, 500, seed=4)
    assert ds.points.shape == (500, m.ambient_dim)
    assert np.all(gdata.check_points(m, ds.points))
    again = gdata.synth_wrapped_mixture(m.spec, 3, 10.0, 500, seed=4)
    assert np.array_equal(ds.points, again.points)
    assert not np.array_equal(ds.points, gdata.synth_wrapped_mixture(m, 3, 10.0, 500, seed=5).points)


@pytest.mark.parametrize("m", ALL, ids=repr)
def test_mixture_collapses_at_high_concentration(m):
    ds = gdata.synth_wrapped_mixture(m, 4, 1e6, 1000, seed=1)
    centers = ds.meta["centers"]
    d = np.min(np.stack([np.reshape(m.dist(ds.points, np.broadcast_to(c, ds.points.shape)), -1)
                         for c in centers]), axis=0)
    assert d.max() < 1e-2


def test_mixture_spread_matches_concentration():
    # tangent Gaussian with scale 1/sqrt(c): E d^2 = dim / c for a tight component
    m = Sphere2()
    ds = gdata.synth_wrapped_mixture(m, 1, 100.0, 20_000, seed=2)
    d2 = np.reshape(m.dist(ds.points, np.broadcast_to(ds.meta["centers"][0], ds.points.shape)), -1) ** 2
    assert abs(d2.mean() - 2 / 100.0) < 1e-3


def test_poincare_centers_inside_radius():
    ds = gdata.synth_wrapped_mixture(PoincareBall(3), 50, 10.0, 10, seed=0)
    assert np.all(np.linalg.norm(ds.meta["centers"], axis=1) <= gdata.POINCARE_CENTER_RADIUS + 1e-12)


def test_mixture_argument_errors():
    with pytest.raises(ContractError):
        gdata.synth_wrapped_mixture(Sphere2(), 0)
    with pytest.raises(ContractError):
        gdata.synth_wrapped_mixture(Sphere2(), 2, 0.0)


def test_split():
    ds = gdata.Dataset(np.arange(100.0)[:, None], FlatTorus(1))
    tr, te = gdata.split(ds, 0.8, seed=3)
    assert len(tr) == 80 and len(te) == 20
    assert sorted(np.concatenate([tr.points, te.points])[:, 0]) == list(range(100))
    tr2, _ = gdata.split(ds, 0.8, seed=3)
    assert np.array_equal(tr.points, tr2.points)
    assert not np.array_equal(tr.points, gdata.split(ds, 0.8, seed=4)[0].points)
    with pytest.raises(ConfigError):
        gdata.split(gdata.Dataset(np.zeros((2, 1)), FlatTorus(1)), 0.9)
    with pytest.raises(ConfigError):
        gdata.split(ds, 1.0)


@pytest.mark.parametrize("m", ALL, ids=repr)
def test_csv_round_trip(tmp_path, m):
    ds = gdata.synth_wrapped_mixture(m, 2, 5.0, 200, seed=0)
    gdata.write_dataset_csv(tmp_path / "d.csv", ds)
    back = gdata.load_dataset_csv(tmp_path / "d.csv", m)
    if isinstance(m, Sphere2):
        assert np.max(np.abs(back.points - ds.points)) < 1e-12
    else:
        assert np.array_equal(back.points, ds.points)


def test_points_csv_column_mismatch(tmp_path):
    p = write(tmp_path, "p.csv", "x1,x2\n0.1,0.2\n0.1,0.2,0.3\n")
    with pytest.raises(ParseError, match=":3:"):
        gdata.load_points_csv(p, PoincareBall(2))


def test_priors():
    assert gdata.get_prior(Sphere2()).log_prob(np.zeros((3, 3))).tolist() == [-np.log(4 * np.pi)] * 3
    with pytest.raises(UnsupportedPriorError):
        gdata.UniformPrior(PoincareBall(2))
    wn = gdata.get_prior(PoincareBall(2))
    x = wn.sample(np.random.default_rng(0), 20_000)
    r = np.reshape(PoincareBall(2).dist(np.zeros_like(x), x), -1)
    # radial law of a 2-d standard tangent Gaussian: E r^2 = 2
    assert abs(np.mean(r**2) - 2.0) < 0.05
    # the series branch for tiny radii is continuous with the closed form (branch at r = 1e-4, r ~ 2|x|)
    below, above = wn.log_prob(np.array([[0.5e-4 * (1 - 1e-6), 0.0], [0.5e-4 * (1 + 1e-6), 0.0]]))
    assert abs(below - above) < 1e-12
    assert np.isfinite(wn.log_prob(np.zeros((1, 2)))[0])


def test_manifest(tmp_path):
    (tmp_path / "sub").mkdir()
    write(tmp_path / "sub", "a.csv", "lat,lon\n1,2\n")
    m = write(tmp_path, "manifest.toml", '[datasets.a]\npath = "sub/a.csv"\nmanifold = "sphere"\n')
    entries = gdata.load_manifest(m)
    assert entries["a"]["path"] == str(tmp_path / "sub" / "a.csv") and entries["a"]["manifold"] == "sphere"
    bad = write(tmp_path, "bad.toml", '[datasets.b]\npath = "x.csv"\n')
    with pytest.raises(ConfigError):
        gdata.load_manifest(bad)


def test_bundled_corpus_satisfies_invariants():
    entries = gdata.load_manifest(REPO / "data" / "manifest.toml")
    assert len(entries) >= 5
    for name, e in entries.items():
        m = get_manifold(e["manifold"], e["n"])
        ds = gdata.load_dataset_csv(e["path"], m)
        assert len(ds) > 0, name
        assert np.all(gdata.check_points(m, ds.points)), name


def test_manifold_spec_object_accepted():
    ds = gdata.synth_wrapped_mixture(ManifoldSpec("torus", 3), 2, 10.0, 10)
    assert ds.manifold.dim == 3
