"""Riemannian operations on the four supported manifolds.

Points and tangent vectors are stored in ambient coordinates as arrays of
shape ``(..., D)`` and every method is batched over the leading axes:

=================  ===  ===  =====================================
manifold            d    D   coordinates
=================  ===  ===  =====================================
``FlatTorus(n)``    n    n   angles in [0, 2*pi)
``Sphere2``         2    3   unit vectors
``SO3``             3    9   rotation matrices, row-major
``PoincareBall(n)`` n    n   open unit ball, conformal metric
=================  ===  ===  =====================================

Methods that appear inside training losses (``exp``, ``proj``, ``inner``,
``sq_dist``, ``covariant``) are written with :mod:`gfm.autodiff` functions
and accept numpy arrays, Tensors or Duals. The rest (``log``, ``dist``,
sampling, frames) are plain numpy.

The single-point API at the bottom of the module (:func:`exp_map`,
:func:`log_map`, ...) validates its inputs and wraps the batched methods.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import special
from .errors import ContractError, CutLocusError, InvalidTangentError, UnsupportedPriorError

TWO_PI = 2.0 * np.pi
BALL_EPS = 1e-5
CUT_LOCUS_TOL = 1e-6


@dataclass(frozen=True)
class ManifoldSpec:
    kind: str  # "torus" | "sphere" | "so3" | "poincare"
    n: int = 0

    @property
    def intrinsic_dim(self) -> int:
        return {"torus": self.n, "sphere": 2, "so3": 3, "poincare": self.n}[self.kind]

    @property
    def ambient_dim(self) -> int:
        return {"torus": self.n, "sphere": 3, "so3": 9, "poincare": self.n}[self.kind]

    @property
    def label(self) -> str:
        return f"{self.kind}{self.n}" if self.kind in ("torus", "poincare") else self.kind


def _zero_if_equal(x, y, v):
    """log_x(x) is exactly zero even when rounding would leave a residue."""
    same = np.all(np.asarray(x) == np.asarray(y), axis=-1, keepdims=True)
    return np.where(same, 0.0, v) if np.any(same) else v


class Manifold:
    """Common interface; subclasses fill in the geometry."""

    spec: ManifoldSpec
    dim: int
    ambient_dim: int
    injectivity_radius: float
    compact: bool = True

    # -- generic (differentiable) -------------------------------------------
    def exp(self, x, v):
        raise NotImplementedError

    def proj(self, x, w):
        raise NotImplementedError

    def inner(self, x, u, v):
        """Metric inner product, shape ``(..., 1)``."""
        return ad.sum(ad.mul(u, v), axis=-1, keepdims=True)

    def sqnorm(self, x, u):
        return self.inner(x, u, u)

    def sq_dist(self, x, y):
        """Squared geodesic distance, smooth at ``x == y``; shape ``(..., 1)``."""
        raise NotImplementedError

    def covariant(self, x, u, w, dw):
        """Levi-Civita derivative of a field ``w`` along ``u`` at ``x``.

        ``dw`` is the ambient directional derivative of the field along ``u``.
        Embedded manifolds project it back onto the tangent space.
        """
        return self.proj(x, dw)

    # -- numpy ---------------------------------------------------------------
    def log(self, x, y):
        raise NotImplementedError

    def dist(self, x, y):
        """Geodesic distance, shape ``(...)``."""
        raise NotImplementedError

    def frame(self, x) -> np.ndarray:
        """Metric-orthonormal tangent frame at ``x``, shape ``(..., d, D)``."""
        raise NotImplementedError

    def sample_uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def log_volume(self) -> float:
        raise NotImplementedError

    def project_point(self, x) -> np.ndarray:
        """Snap numerically drifted points back onto the manifold."""
        return np.asarray(x, dtype=np.float64)

    def features(self, x):
        """Network input features of a point."""
        return x

    def feature_dim(self) -> int:
        return self.ambient_dim

    def point_error(self, x) -> np.ndarray:
        """Per-point violation of the manifold constraints (0 when exact)."""
        raise NotImplementedError

    def tangent_error(self, x, v) -> np.ndarray:
        return np.zeros(np.shape(v)[:-1])

    def near_cut_locus(self, x, y, tol: float = CUT_LOCUS_TOL) -> np.ndarray:
        return np.zeros(np.shape(x)[:-1], dtype=bool)

    def pairwise_sq_dist(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        """Matrix of squared distances between two point sets."""
        block = max(1, int(4_000_000 // max(1, len(q) * self.ambient_dim)))
        out = np.empty((len(p), len(q)))
        for i in range(0, len(p), block):
            out[i : i + block] = self.dist(p[i : i + block, None, :], q[None, :, :]) ** 2
        return out

    def __repr__(self):
        return f"{type(self).__name__}({self.spec.label})"


class FlatTorus(Manifold):
    """Product of ``n`` circles in the flat angle chart."""

    def __init__(self, n: int):
        if n < 1:
            raise ContractError("torus dimension must be >= 1")
        self.spec = ManifoldSpec("torus", n)
        self.dim = self.ambient_dim = n
        self.injectivity_radius = np.pi

    def exp(self, x, v):
        return ad.wrap_angle(ad.add(x, v))

    def proj(self, x, w):
        return w

    def sq_dist(self, x, y):
        d = ad.wrap_pm(ad.sub(x, y))
        return ad.sum(ad.mul(d, d), axis=-1, keepdims=True)

    def covariant(self, x, u, w, dw):
        return dw

    def log(self, x, y):
        return ad._wrap_pm_np(np.asarray(y) - np.asarray(x))

    def dist(self, x, y):
        return np.linalg.norm(self.log(x, y), axis=-1)

    def pairwise_sq_dist(self, p, q):
        out = np.zeros((len(p), len(q)))
        for k in range(self.ambient_dim):
            d = ad._wrap_pm_np(q[None, :, k] - p[:, None, k])
            out += d * d
        return out

    def frame(self, x):
        x = np.asarray(x)
        return np.broadcast_to(np.eye(self.dim), x.shape[:-1] + (self.dim, self.dim)).copy()

    def sample_uniform(self, rng, n):
        return rng.uniform(0.0, TWO_PI, size=(n, self.dim))

    def log_volume(self):
        return self.dim * np.log(TWO_PI)

    def project_point(self, x):
        return ad._wrap_np(np.asarray(x, dtype=np.float64))

    def features(self, x):
        return ad.concatenate([ad.cos(x), ad.sin(x)], axis=-1)

    def feature_dim(self):
        return 2 * self.dim

    def point_error(self, x):
        x = np.asarray(x)
        return np.max(np.maximum(0.0, -x) + (x >= TWO_PI), axis=-1)

    def near_cut_locus(self, x, y, tol=CUT_LOCUS_TOL):
        d = np.abs(self.log(x, y))
        return np.any(d > np.pi - tol, axis=-1)


class Sphere2(Manifold):
    """Unit sphere in R^3 with the induced metric."""

    def __init__(self):
        self.spec = ManifoldSpec("sphere")
        self.dim, self.ambient_dim = 2, 3
        self.injectivity_radius = np.pi

    def exp(self, x, v):
        q = ad.sum(ad.mul(v, v), axis=-1, keepdims=True)
        # no renormalisation: v == 0 must return x bit-for-bit
        return ad.add(ad.mul(special.cos_sqrt(q), x), ad.mul(special.sinc_sqrt(q), v))

    def proj(self, x, w):
        xw = ad.sum(ad.mul(x, w), axis=-1, keepdims=True)
        xx = ad.sum(ad.mul(x, x), axis=-1, keepdims=True)
        return ad.sub(w, ad.mul(ad.div(xw, xx), x))

    def sq_dist(self, x, y):
        d = ad.sub(x, y)
        q = ad.mul(ad.sum(ad.mul(d, d), axis=-1, keepdims=True), 0.25)
        return ad.mul(special.asin_sq(ad.clip(q, 0.0, 1.0)), 4.0)

    def log(self, x, y):
        x, y = np.asarray(x), np.asarray(y)
        c = np.sum(x * y, axis=-1, keepdims=True)
        w = y - c * x
        nw = np.linalg.norm(w, axis=-1, keepdims=True)
        theta = np.arctan2(nw, c)
        scale = np.where(nw > 1e-300, theta / np.where(nw > 1e-300, nw, 1.0), 1.0)
        return _zero_if_equal(x, y, scale * w)

    def dist(self, x, y):
        x, y = np.asarray(x), np.asarray(y)
        c = np.sum(x * y, axis=-1)
        s = np.linalg.norm(np.cross(x, y), axis=-1)
        return np.arctan2(s, c)

    def pairwise_sq_dist(self, p, q):
        c = np.clip(p @ q.T, -1.0, 1.0)
        return np.arccos(c) ** 2

    def frame(self, x):
        x = np.asarray(x, dtype=np.float64)
        axis = np.argmin(np.abs(x), axis=-1)
        helper = np.eye(3)[axis]
        e1 = helper - np.sum(helper * x, axis=-1, keepdims=True) * x
        e1 /= np.linalg.norm(e1, axis=-1, keepdims=True)
        e2 = np.cross(x, e1)
        return np.stack([e1, e2], axis=-2)

    def sample_uniform(self, rng, n):
        g = rng.standard_normal((n, 3))
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    def log_volume(self):
        return np.log(4.0 * np.pi)

    def project_point(self, x):
        x = np.asarray(x, dtype=np.float64)
        return x / np.linalg.norm(x, axis=-1, keepdims=True)

    def point_error(self, x):
        return np.abs(np.linalg.norm(x, axis=-1) - 1.0)

    def tangent_error(self, x, v):
        return np.abs(np.sum(np.asarray(x) * np.asarray(v), axis=-1))

    def near_cut_locus(self, x, y, tol=CUT_LOCUS_TOL):
        return self.dist(x, y) > np.pi - tol


# so(3) generators, orthonormal for <A, B> = tr(A^T B) / 2
_GENERATORS = np.array(
    [
        [[0, 0, 0], [0, 0, -1], [0, 1, 0]],
        [[0, 0, 1], [0, 0, 0], [-1, 0, 0]],
        [[0, -1, 0], [1, 0, 0], [0, 0, 0]],
    ],
    dtype=np.float64,
)


def hat(omega: np.ndarray) -> np.ndarray:
    """Axis-angle vector(s) -> skew-symmetric matrices."""
    return np.einsum("...i,ijk->...jk", np.asarray(omega, dtype=np.float64), _GENERATORS)


def vee(k: np.ndarray) -> np.ndarray:
    k = np.asarray(k)
    return np.stack([k[..., 2, 1], k[..., 0, 2], k[..., 1, 0]], axis=-1)


def rotmat_to_quat(r: np.ndarray) -> np.ndarray:
    """Shepperd's method; returns (w, x, y, z) with w >= 0."""
    r = np.asarray(r, dtype=np.float64)
    tr = r[..., 0, 0] + r[..., 1, 1] + r[..., 2, 2]
    cands = np.stack(
        [
            np.stack([1 + tr, r[..., 2, 1] - r[..., 1, 2], r[..., 0, 2] - r[..., 2, 0], r[..., 1, 0] - r[..., 0, 1]], -1),
            np.stack([r[..., 2, 1] - r[..., 1, 2], 1 + 2 * r[..., 0, 0] - tr, r[..., 0, 1] + r[..., 1, 0], r[..., 0, 2] + r[..., 2, 0]], -1),
            np.stack([r[..., 0, 2] - r[..., 2, 0], r[..., 0, 1] + r[..., 1, 0], 1 + 2 * r[..., 1, 1] - tr, r[..., 1, 2] + r[..., 2, 1]], -1),
            np.stack([r[..., 1, 0] - r[..., 0, 1], r[..., 0, 2] + r[..., 2, 0], r[..., 1, 2] + r[..., 2, 1], 1 + 2 * r[..., 2, 2] - tr], -1),
        ],
        axis=-2,
    )
    diag = np.stack([tr, r[..., 0, 0], r[..., 1, 1], r[..., 2, 2]], -1)
    pick = np.argmax(diag, axis=-1)
    q = np.take_along_axis(cands, pick[..., None, None], axis=-2)[..., 0, :]
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    return q * np.where(q[..., :1] < 0, -1.0, 1.0)


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
        ],
        axis=-2,
    )


def so3_log_matrix(r: np.ndarray) -> np.ndarray:
    """Principal matrix logarithm of rotations, via quaternions (stable near 0 and pi)."""
    q = rotmat_to_quat(r)
    w, v = q[..., :1], q[..., 1:]
    nv = np.linalg.norm(v, axis=-1, keepdims=True)
    angle = 2.0 * np.arctan2(nv, w)
    scale = np.where(nv > 1e-12, angle / np.where(nv > 1e-12, nv, 1.0), 2.0 / w)
    return hat(scale * v)


def rotation_angle(r: np.ndarray) -> np.ndarray:
    q = rotmat_to_quat(r)
    return 2.0 * np.arctan2(np.linalg.norm(q[..., 1:], axis=-1), q[..., 0])


class SO3(Manifold):
    """Rotation group with the bi-invariant metric ``<U, V> = tr(U^T V) / 2``.

    Under this normalisation the geodesic distance between two rotations is
    the angle of their relative rotation.
    """

    def __init__(self):
        self.spec = ManifoldSpec("so3")
        self.dim, self.ambient_dim = 3, 9
        self.injectivity_radius = np.pi

    @staticmethod
    def _m(x):
        return ad.reshape(x, np.shape(ad.value(x))[:-1] + (3, 3))

    @staticmethod
    def _f(x):
        return ad.reshape(x, np.shape(ad.value(x))[:-2] + (9,))

    def exp(self, x, v):
        r, w = self._m(x), self._m(v)
        k = ad.matmul(ad.swapaxes(r, -1, -2), w)
        k = ad.mul(ad.sub(k, ad.swapaxes(k, -1, -2)), 0.5)
        q = ad.mul(ad.sum(ad.mul(k, k), axis=(-2, -1), keepdims=True), 0.5)
        kk = ad.matmul(k, k)
        rot = ad.add(
            np.eye(3), ad.add(ad.mul(special.sinc_sqrt(q), k), ad.mul(special.versinc_sqrt(q), kk))
        )
        return self._f(ad.matmul(r, rot))

    def proj(self, x, w):
        r, a = self._m(x), self._m(w)
        k = ad.matmul(ad.swapaxes(r, -1, -2), a)
        k = ad.mul(ad.sub(k, ad.swapaxes(k, -1, -2)), 0.5)
        return self._f(ad.matmul(r, k))

    def inner(self, x, u, v):
        return ad.mul(ad.sum(ad.mul(u, v), axis=-1, keepdims=True), 0.5)

    def sq_dist(self, x, y):
        d = ad.sub(x, y)
        q = ad.mul(ad.sum(ad.mul(d, d), axis=-1, keepdims=True), 0.125)
        return ad.mul(special.asin_sq(ad.clip(q, 0.0, 1.0)), 4.0)

    def log(self, x, y):
        r = np.asarray(x).reshape(np.shape(x)[:-1] + (3, 3))
        s = np.asarray(y).reshape(np.shape(y)[:-1] + (3, 3))
        k = so3_log_matrix(np.swapaxes(r, -1, -2) @ s)
        return _zero_if_equal(x, y, (r @ k).reshape(np.shape(x)))

    def dist(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x), np.asarray(y))
        r = x.reshape(x.shape[:-1] + (3, 3))
        s = y.reshape(y.shape[:-1] + (3, 3))
        return rotation_angle(np.swapaxes(r, -1, -2) @ s)

    def pairwise_sq_dist(self, p, q):
        tr = p @ q.T  # tr(R^T S) = sum of elementwise products
        return np.arccos(np.clip((tr - 1.0) / 2.0, -1.0, 1.0)) ** 2

    def frame(self, x):
        r = np.asarray(x, dtype=np.float64).reshape(np.shape(x)[:-1] + (3, 3))
        e = np.einsum("...ij,ajk->...aik", r, _GENERATORS)
        return e.reshape(np.shape(x)[:-1] + (3, 9))

    def sample_uniform(self, rng, n):
        g = rng.standard_normal((n, 3, 3))
        qm, rm = np.linalg.qr(g)
        qm = qm * np.sign(np.diagonal(rm, axis1=-2, axis2=-1))[..., None, :]
        flip = np.linalg.det(qm) < 0
        qm[flip, :, 2] *= -1.0
        return qm.reshape(n, 9)

    def log_volume(self):
        return np.log(8.0 * np.pi**2)

    def project_point(self, x):
        r = np.asarray(x, dtype=np.float64).reshape(np.shape(x)[:-1] + (3, 3))
        u, _, vt = np.linalg.svd(r)
        d = np.sign(np.linalg.det(u @ vt))
        u[..., :, 2] *= d[..., None]
        return (u @ vt).reshape(np.shape(x))

    def point_error(self, x):
        r = np.asarray(x).reshape(np.shape(x)[:-1] + (3, 3))
        orth = np.abs(np.swapaxes(r, -1, -2) @ r - np.eye(3)).max(axis=(-2, -1))
        return np.maximum(orth, np.abs(np.linalg.det(r) - 1.0))

    def tangent_error(self, x, v):
        r = np.asarray(x).reshape(np.shape(x)[:-1] + (3, 3))
        a = np.asarray(v).reshape(np.shape(v)[:-1] + (3, 3))
        k = np.swapaxes(r, -1, -2) @ a
        return np.abs(k + np.swapaxes(k, -1, -2)).max(axis=(-2, -1))

    def near_cut_locus(self, x, y, tol=CUT_LOCUS_TOL):
        return self.dist(x, y) > np.pi - tol


def mobius_add(x, y):
    xy = ad.sum(ad.mul(x, y), axis=-1, keepdims=True)
    xx = ad.sum(ad.mul(x, x), axis=-1, keepdims=True)
    yy = ad.sum(ad.mul(y, y), axis=-1, keepdims=True)
    a = ad.add(ad.add(1.0, ad.mul(2.0, xy)), yy)
    num = ad.add(ad.mul(a, x), ad.mul(ad.sub(1.0, xx), y))
    den = ad.add(ad.add(1.0, ad.mul(2.0, xy)), ad.mul(xx, yy))
    return ad.div(num, den)


class PoincareBall(Manifold):
    """Open unit ball with metric ``lambda_x^2 <u, v>``, ``lambda_x = 2 / (1 - |x|^2)``."""

    compact = False

    def __init__(self, n: int = 2, eps: float = BALL_EPS):
        self.spec = ManifoldSpec("poincare", n)
        self.dim = self.ambient_dim = n
        self.injectivity_radius = np.inf
        self.max_radius = 1.0 - eps
        self.clip_count = 0

    @staticmethod
    def conformal(x):
        xx = ad.sum(ad.mul(x, x), axis=-1, keepdims=True)
        return ad.div(2.0, ad.sub(1.0, xx))

    def _clip(self, y):
        r = np.linalg.norm(ad.value(y), axis=-1, keepdims=True)
        over = r > self.max_radius
        if not np.any(over):
            return y
        self.clip_count += int(np.count_nonzero(over))
        scale = np.where(over, self.max_radius / np.where(over, r, 1.0), 1.0)
        return ad.mul(y, scale)

    def exp(self, x, v):
        lam = self.conformal(x)
        q = ad.sum(ad.mul(v, v), axis=-1, keepdims=True)
        z2 = ad.mul(ad.mul(lam, lam), ad.mul(q, 0.25))
        step = ad.mul(ad.mul(ad.mul(lam, 0.5), special.tanhc_sqrt(z2)), v)
        return self._clip(mobius_add(x, step))

    def proj(self, x, w):
        return w

    def inner(self, x, u, v):
        lam = self.conformal(x)
        return ad.mul(ad.mul(lam, lam), ad.sum(ad.mul(u, v), axis=-1, keepdims=True))

    def sq_dist(self, x, y):
        d = ad.sub(x, y)
        dd = ad.sum(ad.mul(d, d), axis=-1, keepdims=True)
        xx = ad.sum(ad.mul(x, x), axis=-1, keepdims=True)
        yy = ad.sum(ad.mul(y, y), axis=-1, keepdims=True)
        p = ad.div(dd, ad.mul(ad.sub(1.0, xx), ad.sub(1.0, yy)))
        return ad.mul(special.asinh_sq(p), 4.0)

    def covariant(self, x, u, w, dw):
        # conformal Christoffel symbols with sigma = log(lambda_x)
        xx = ad.sum(ad.mul(x, x), axis=-1, keepdims=True)
        gs = ad.div(ad.mul(2.0, x), ad.sub(1.0, xx))
        ug = ad.sum(ad.mul(u, gs), axis=-1, keepdims=True)
        wg = ad.sum(ad.mul(w, gs), axis=-1, keepdims=True)
        uw = ad.sum(ad.mul(u, w), axis=-1, keepdims=True)
        corr = ad.sub(ad.add(ad.mul(ug, w), ad.mul(wg, u)), ad.mul(uw, gs))
        return ad.add(dw, corr)

    def log(self, x, y):
        x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
        m = mobius_add(-x, y)
        nm = np.linalg.norm(m, axis=-1, keepdims=True)
        lam = self.conformal(x)
        nm_c = np.minimum(nm, 1.0 - 1e-16)
        scale = np.where(nm > 1e-300, np.arctanh(nm_c) / np.where(nm > 1e-300, nm, 1.0), 1.0)
        return _zero_if_equal(x, y, (2.0 / lam) * scale * m)

    def dist(self, x, y):
        x, y = np.asarray(x), np.asarray(y)
        dd = np.sum((x - y) ** 2, axis=-1)
        den = (1.0 - np.sum(x * x, axis=-1)) * (1.0 - np.sum(y * y, axis=-1))
        return 2.0 * np.arcsinh(np.sqrt(dd / den))

    def pairwise_sq_dist(self, p, q):
        pp = np.sum(p * p, axis=-1)
        qq = np.sum(q * q, axis=-1)
        dd = np.maximum(pp[:, None] + qq[None, :] - 2.0 * p @ q.T, 0.0)
        den = (1.0 - pp)[:, None] * (1.0 - qq)[None, :]
        return (2.0 * np.arcsinh(np.sqrt(dd / den))) ** 2

    def frame(self, x):
        x = np.asarray(x, dtype=np.float64)
        inv = (1.0 - np.sum(x * x, axis=-1)) / 2.0
        return np.eye(self.dim) * inv[..., None, None]

    def sample_uniform(self, rng, n):
        raise UnsupportedPriorError(
            "the Poincare ball has infinite volume; use a wrapped normal prior"
        )

    def log_volume(self):
        raise UnsupportedPriorError("the Poincare ball has infinite volume")

    def project_point(self, x):
        return ad.value(self._clip(np.asarray(x, dtype=np.float64)))

    def point_error(self, x):
        return np.maximum(0.0, np.linalg.norm(x, axis=-1) - self.max_radius)


def get_manifold(kind: str, n: int = 2) -> Manifold:
    kind = kind.lower()
    if kind in ("torus", "flat_torus", "flattorus"):
        return FlatTorus(n)
    if kind in ("sphere", "sphere2", "s2"):
        return Sphere2()
    if kind in ("so3", "so(3)"):
        return SO3()
    if kind in ("poincare", "poincare_ball", "poincareball", "hyperbolic"):
        return PoincareBall(n)
    raise ContractError(f"unknown manifold kind {kind!r}")


# ---------------------------------------------------------------------------
# single-point API with validation


@dataclass(frozen=True)
class ManifoldPoint:
    coords: np.ndarray
    manifold: Manifold

    def __post_init__(self):
        object.__setattr__(self, "coords", np.asarray(self.coords, dtype=np.float64))
        if self.coords.shape != (self.manifold.ambient_dim,):
            raise ContractError(
                f"{self.manifold} point needs {self.manifold.ambient_dim} coords, "
                f"got shape {self.coords.shape}"
            )


@dataclass(frozen=True)
class TangentVector:
    base: ManifoldPoint
    components: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "components", np.asarray(self.components, dtype=np.float64))
        if self.components.shape != self.base.coords.shape:
            raise ContractError("tangent components must match the ambient dimension")


def _tangent_tol(v: np.ndarray) -> float:
    return 1e-8 * max(1.0, float(np.max(np.abs(v))))


def exp_map(x: ManifoldPoint, v: TangentVector) -> ManifoldPoint:
    if v.base is not x and not np.array_equal(v.base.coords, x.coords):
        raise ContractError("exp_map: tangent vector is based at a different point")
    m = x.manifold
    if float(m.tangent_error(x.coords, v.components)) > _tangent_tol(v.components):
        raise InvalidTangentError(f"exp_map: vector is not tangent to {m} at the base point")
    if not np.any(v.components):
        return ManifoldPoint(x.coords.copy(), m)
    return ManifoldPoint(m.project_point(m.exp(x.coords, v.components)), m)


def log_map(x: ManifoldPoint, y: ManifoldPoint) -> TangentVector:
    m = x.manifold
    if y.manifold.spec != m.spec:
        raise ContractError("log_map: points live on different manifolds")
    if bool(m.near_cut_locus(x.coords, y.coords)):
        raise CutLocusError(f"log_map: {y.coords} is within tolerance of the cut locus of {x.coords}")
    return TangentVector(x, m.log(x.coords, y.coords))


def tangent_project(x: ManifoldPoint, w) -> TangentVector:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != x.coords.shape:
        raise ContractError("tangent_project: ambient vector has the wrong length")
    return TangentVector(x, x.manifold.proj(x.coords, w))


def _same_base(x, *vs):
    for v in vs:
        if not np.array_equal(v.base.coords, x.coords):
            raise ContractError("tangent vectors must be based at the given point")


def metric_inner(x: ManifoldPoint, u: TangentVector, v: TangentVector) -> float:
    _same_base(x, u, v)
    return float(x.manifold.inner(x.coords, u.components, v.components)[0])


def geodesic_distance(x: ManifoldPoint, y: ManifoldPoint) -> float:
    if y.manifold.spec != x.manifold.spec:
        raise ContractError("geodesic_distance: points live on different manifolds")
    return float(x.manifold.dist(x.coords, y.coords))


def tangent_frame(x: ManifoldPoint) -> list[TangentVector]:
    return [TangentVector(x, e) for e in x.manifold.frame(x.coords)]


def sample_uniform(spec: ManifoldSpec, rng: np.random.Generator) -> ManifoldPoint:
    m = get_manifold(spec.kind, spec.n or 2)
    return ManifoldPoint(m.sample_uniform(rng, 1)[0], m)
