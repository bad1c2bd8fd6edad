"""Datasets, CSV formats, synthetic targets and reference priors.

CSV formats
-----------
* geodata: header ``lat,lon`` in degrees, loaded onto the unit sphere;
* angles: ``n`` numeric columns in radians, loaded onto ``FlatTorus(n)``;
* points: header ``x1,...,xD``, manifold-native ambient coordinates (used for
  sample dumps and for round-tripping any dataset).

Floats are written with ``repr`` so chart coordinates survive a round trip
bit-exactly.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, ParseError, UnsupportedPriorError
from .manifolds import FlatTorus, Manifold, ManifoldSpec, PoincareBall, Sphere2, get_manifold
from .model import atomic_write

POINCARE_CENTER_RADIUS = 0.8


@dataclass(frozen=True)
class Dataset:
    points: np.ndarray
    manifold: Manifold
    name: str = "dataset"
    split_seed: int = 0
    train_fraction: float = 0.8
    meta: dict = field(default_factory=dict, compare=False)

    def __len__(self):
        return len(self.points)


# ---------------------------------------------------------------------------
# priors


class UniformPrior:
    """Normalised Riemannian volume measure of a compact manifold."""

    def __init__(self, manifold: Manifold):
        if not manifold.compact:
            raise UnsupportedPriorError(f"{manifold} has no uniform distribution")
        self.manifold = manifold
        self._logp = -manifold.log_volume()

    def sample(self, rng, n):
        return self.manifold.sample_uniform(rng, n)

    def log_prob(self, x):
        return np.full(np.shape(x)[:-1], self._logp)


class WrappedNormalPrior:
    """Standard wrapped normal at the origin of the Poincare ball.

    Tangent coordinates in a metric-orthonormal frame at the origin are
    ``N(0, I)``; the density is taken against Riemannian volume.
    """

    def __init__(self, manifold: PoincareBall, scale: float = 1.0):
        self.manifold = manifold
        self.scale = scale

    def sample(self, rng, n):
        return sample_wrapped_normal(
            self.manifold, np.zeros(self.manifold.dim), self.scale, rng, n
        )

    def log_prob(self, x):
        m = self.manifold
        d = m.dim
        r = m.dist(np.zeros_like(x), x)
        gauss = -0.5 * (r / self.scale) ** 2 - d * math.log(self.scale) - 0.5 * d * math.log(2 * math.pi)
        rs = np.maximum(r, 1e-8)
        jac = np.where(r > 1e-4, np.log(rs / np.sinh(rs)), -r * r / 6.0)
        return gauss + (d - 1) * jac


def get_prior(manifold: Manifold):
    return WrappedNormalPrior(manifold) if isinstance(manifold, PoincareBall) else UniformPrior(manifold)


def sample_wrapped_normal(manifold: Manifold, center, scale: float, rng, n: int) -> np.ndarray:
    """Push ``N(0, scale^2 I)`` tangent coordinates at ``center`` through exp."""
    center = np.asarray(center, dtype=np.float64)
    frame = manifold.frame(center)  # (d, D)
    z = rng.standard_normal((n, manifold.dim)) * scale
    v = z @ frame
    base = np.broadcast_to(center, (n, manifold.ambient_dim))
    return manifold.project_point(manifold.exp(base, v))


# ---------------------------------------------------------------------------
# synthetic targets


def _centers(manifold: Manifold, rng, k: int) -> np.ndarray:
    if isinstance(manifold, PoincareBall):
        # uniform direction, radius in [0, 0.8]
        g = rng.standard_normal((k, manifold.dim))
        g /= np.linalg.norm(g, axis=-1, keepdims=True)
        return g * POINCARE_CENTER_RADIUS * rng.uniform(0.0, 1.0, (k, 1)) ** (1.0 / manifold.dim)
    return manifold.sample_uniform(rng, k)


def synth_wrapped_mixture(
    spec: ManifoldSpec | Manifold,
    n_components: int = 4,
    concentration: float = 10.0,
    n_samples: int = 25_000,
    seed: int = 0,
) -> Dataset:
    """Equal-weight mixture of wrapped normals with seed-determined centers."""
    if n_components < 1:
        raise ContractError("n_components must be >= 1")
    if not concentration > 0:
        raise ContractError("concentration must be > 0")
    m = spec if isinstance(spec, Manifold) else get_manifold(spec.kind, spec.n or 2)
    rng = np.random.default_rng(seed)
    centers = _centers(m, rng, n_components)
    labels = rng.integers(0, n_components, n_samples)
    scale = 1.0 / math.sqrt(concentration)
    frames = m.frame(centers)  # (k, d, D)
    z = rng.standard_normal((n_samples, m.dim)) * scale
    v = np.einsum("nd,ndk->nk", z, frames[labels])
    pts = m.project_point(m.exp(centers[labels], v))
    name = f"mixture-{m.spec.label}-k{n_components}-c{concentration:g}"
    return Dataset(pts, m, name, seed, meta={"centers": centers, "labels": labels})


def default_synthetic(manifold: Manifold, n_samples: int = 25_000, seed: int = 0) -> Dataset:
    if manifold.spec.kind == "so3":
        return synth_wrapped_mixture(manifold, 16, 50.0, n_samples, seed)
    return synth_wrapped_mixture(manifold, 4, 10.0, n_samples, seed)


# ---------------------------------------------------------------------------
# splits


def split(dataset: Dataset, train_fraction: float = 0.8, seed: int = 0) -> tuple[Dataset, Dataset]:
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = len(dataset)
    n_train = int(round(train_fraction * n))
    if n_train == 0 or n_train == n:
        raise ConfigError(f"split of {n} points at fraction {train_fraction} leaves one side empty")
    perm = np.random.default_rng(seed).permutation(n)
    mk = lambda idx, tag: Dataset(  # noqa: E731
        dataset.points[np.sort(idx)], dataset.manifold, f"{dataset.name}/{tag}", seed, train_fraction
    )
    return mk(perm[:n_train], "train"), mk(perm[n_train:], "test")


# ---------------------------------------------------------------------------
# CSV io


def _rows(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path}: empty file")
        for i, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            yield header, i, row


def _floats(path, lineno, row):
    try:
        return [float(c) for c in row]
    except ValueError:
        raise ParseError(f"{path}:{lineno}: non-numeric value in {row}") from None


def latlon_to_xyz(lat, lon) -> np.ndarray:
    phi, lam = np.radians(lat), np.radians(lon)
    return np.stack([np.cos(phi) * np.cos(lam), np.cos(phi) * np.sin(lam), np.sin(phi)], axis=-1)


def xyz_to_latlon(x) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x)
    lat = np.degrees(np.arctan2(x[..., 2], np.hypot(x[..., 0], x[..., 1])))
    lon = np.degrees(np.arctan2(x[..., 1], x[..., 0]))
    return lat, lon


def load_geodata_csv(path) -> Dataset:
    lat, lon = [], []
    for header, i, row in _rows(path):
        if [h.strip().lower() for h in header] != ["lat", "lon"]:
            raise ParseError(f"{path}:1: expected header 'lat,lon', got {','.join(header)}")
        if len(row) != 2:
            raise ParseError(f"{path}:{i}: expected 2 columns, got {len(row)}")
        a, b = _floats(path, i, row)
        if not (-90.0 <= a <= 90.0 and -180.0 <= b <= 180.0):
            raise ParseError(f"{path}:{i}: lat/lon ({a}, {b}) out of range")
        lat.append(a)
        lon.append(b)
    pts = latlon_to_xyz(np.array(lat), np.array(lon)).reshape(-1, 3)
    return Dataset(pts, Sphere2(), Path(path).stem)


def write_geodata_csv(path, points) -> None:
    lat, lon = xyz_to_latlon(points)
    buf = io.StringIO()
    buf.write("lat,lon\n")
    for a, b in zip(lat, lon):
        buf.write(f"{float(a)!r},{float(b)!r}\n")
    atomic_write(path, buf.getvalue())


def load_angles_csv(path, n: int) -> Dataset:
    vals = []
    for _, i, row in _rows(path):
        if len(row) != n:
            raise ParseError(f"{path}:{i}: expected {n} angle columns, got {len(row)}")
        vals.append(_floats(path, i, row))
    m = FlatTorus(n)
    pts = m.project_point(np.array(vals, dtype=np.float64).reshape(-1, n))
    return Dataset(pts, m, Path(path).stem)


def write_points_csv(path, points, header: list[str] | None = None) -> None:
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    header = header or [f"x{i + 1}" for i in range(points.shape[1])]
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in points:
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    atomic_write(path, buf.getvalue())


def load_points_csv(path, manifold: Manifold) -> Dataset:
    vals = []
    for _, i, row in _rows(path):
        if len(row) != manifold.ambient_dim:
            raise ParseError(
                f"{path}:{i}: expected {manifold.ambient_dim} columns for {manifold}, got {len(row)}"
            )
        vals.append(_floats(path, i, row))
    pts = np.array(vals, dtype=np.float64).reshape(-1, manifold.ambient_dim)
    return Dataset(pts, manifold, Path(path).stem)


def write_dataset_csv(path, ds: Dataset) -> None:
    """Native format per manifold: lat/lon for the sphere, angles or points otherwise."""
    if isinstance(ds.manifold, Sphere2):
        write_geodata_csv(path, ds.points)
    elif isinstance(ds.manifold, FlatTorus):
        write_points_csv(path, ds.points, [f"angle{i + 1}" for i in range(ds.manifold.dim)])
    else:
        write_points_csv(path, ds.points)


def load_dataset_csv(path, manifold: Manifold) -> Dataset:
    if isinstance(manifold, Sphere2):
        return load_geodata_csv(path)
    if isinstance(manifold, FlatTorus):
        return load_angles_csv(path, manifold.dim)
    return load_points_csv(path, manifold)


def load_manifest(path) -> dict[str, dict]:
    """TOML manifest: ``[datasets.<name>]`` tables with ``path`` and ``manifold`` (and ``n``).

    Relative paths are resolved against the manifest's directory.
    """
    from .config import read_toml

    raw = read_toml(path).get("datasets", {})
    base = Path(path).resolve().parent
    out = {}
    for name, entry in raw.items():
        if "path" not in entry or "manifold" not in entry:
            raise ConfigError(f"manifest entry {name!r} needs 'path' and 'manifold'")
        p = Path(entry["path"])
        out[name] = {
            "path": str(p if p.is_absolute() else base / p),
            "manifold": entry["manifold"],
            "n": int(entry.get("n", 2)),
        }
    return out


def check_points(manifold: Manifold, points, tol: float | None = None) -> np.ndarray:
    """Boolean mask of rows satisfying the manifold's point invariants."""
    if tol is None:
        tol = {"sphere": 1e-9, "so3": 1e-8}.get(manifold.spec.kind, 0.0)
    return manifold.point_error(points) <= tol
