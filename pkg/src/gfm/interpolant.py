"""Geodesic interpolant, training-time distributions and couplings."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NearSingularError
from .manifolds import Manifold

SINGULAR_TOL = 1e-6
RFM_T_MAX = 1.0 - 1e-4
MAX_RESAMPLE_ROUNDS = 100


@dataclass(frozen=True)
class Schedule:
    alpha: Callable[[np.ndarray], np.ndarray]
    dalpha: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"


LINEAR = Schedule(lambda t: t, lambda t: np.ones_like(t), "linear")


def sample_times(rng: np.random.Generator, n: int | None = None):
    """Draw ``t ~ U[0, 1]`` and ``s | t ~ U[0, t]``; returns arrays of shape ``(n,)``."""
    size = 1 if n is None else n
    t = rng.uniform(0.0, 1.0, size)
    s = t * rng.uniform(0.0, 1.0, size)
    if n is None:
        return float(s[0]), float(t[0])
    return s, t


def interpolate(manifold: Manifold, x0, x1, t, sched: Schedule = LINEAR) -> np.ndarray:
    """``I_t = exp_{x0}(alpha_t log_{x0}(x1))`` with exact endpoints."""
    x0, x1 = np.asarray(x0, dtype=np.float64), np.asarray(x1, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    tc = t[..., None] if t.ndim == x0.ndim - 1 and x0.ndim > 1 else t
    a = sched.alpha(tc)
    out = manifold.project_point(manifold.exp(x0, a * manifold.log(x0, x1)))
    out = np.where(tc == 0.0, x0, out)
    return np.where(tc == 1.0, x1, out)


def interpolant_velocity(manifold: Manifold, x0, x1, t, sched: Schedule = LINEAR) -> np.ndarray:
    """``dI_t/dt = alpha'_t / (1 - alpha_t) * log_{I_t}(x1)``, a tangent vector at ``I_t``."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t >= 1.0 - SINGULAR_TOL):
        raise NearSingularError(f"interpolant velocity is singular at t -> 1 (got t = {t.max()})")
    x0 = np.asarray(x0, dtype=np.float64)
    tc = t[..., None] if t.ndim == x0.ndim - 1 and x0.ndim > 1 else t
    xt = interpolate(manifold, x0, x1, t, sched)
    return sched.dalpha(tc) / (1.0 - sched.alpha(tc)) * manifold.log(xt, x1)


def sample_coupling(dataset_points, prior, rng, m: int, manifold: Manifold):
    """Independent pairs ``(x0, x1)``; pairs near the cut locus are redrawn."""
    if m < 1:
        raise ValueError("batch size must be >= 1")
    x1 = dataset_points[rng.integers(0, len(dataset_points), m)]
    x0 = prior.sample(rng, m)
    for _ in range(MAX_RESAMPLE_ROUNDS):
        bad = manifold.near_cut_locus(x0, x1)
        if not np.any(bad):
            return x0, x1
        x0 = x0.copy()
        x0[bad] = prior.sample(rng, int(bad.sum()))
    raise RuntimeError("could not draw pairs away from the cut locus")


@dataclass
class Batch:
    """Training tuples with times as ``(M, 1)`` columns."""

    s: np.ndarray
    t: np.ndarray
    x0: np.ndarray
    x1: np.ndarray
    xs: np.ndarray
    us: np.ndarray

    def __len__(self):
        return len(self.s)


def make_batch(manifold: Manifold, x0, x1, s, t, sched: Schedule = LINEAR) -> Batch:
    s = np.minimum(np.asarray(s, dtype=np.float64), RFM_T_MAX)
    t = np.asarray(t, dtype=np.float64)
    t = np.maximum(t, s)
    xs = interpolate(manifold, x0, x1, s, sched)
    us = interpolant_velocity(manifold, x0, x1, s, sched)
    return Batch(s[:, None], t[:, None], np.asarray(x0), np.asarray(x1), xs, us)


def draw_batch(manifold: Manifold, points, prior, rng, m: int, sched: Schedule = LINEAR) -> Batch:
    """One step of data drawing: times, coupling, interpolant and its velocity."""
    s, t = sample_times(rng, m)
    x0, x1 = sample_coupling(points, prior, rng, m, manifold)
    return make_batch(manifold, x0, x1, s, t, sched)
