"""Training objectives.

Every loss takes ``(model, params, batch)`` where ``params`` may be numpy
arrays or reverse-mode Tensors, and returns a scalar of the same kind.
Teacher terms are evaluated with ``teacher`` parameters (numpy arrays); by
default these are the numeric values of ``params``, which is exactly a
stop-gradient on the teacher branch. Passing a frozen snapshot instead lets
finite-difference checks differentiate the student alone.

Residuals are measured with the metric at the point they are tangent to:
``x_s`` for RFM and G-MF, ``X_{s,t}(x_s)`` for G-LSD and G-ESD.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError
from .interpolant import Batch

VARIANTS = ("rfm", "glsd", "gesd", "gpsd", "gmf")


@dataclass(frozen=True)
class LossConfig:
    variant: str = "glsd"
    sd_weight: float = 1.0
    include_fm: bool | None = None  # None: derived from the variant
    psd_mid: str = "midpoint"  # or "uniform"

    def __post_init__(self):
        v = self.variant.lower().replace("-", "").replace("_", "")
        v = {"rfmonly": "rfm"}.get(v, v)
        if v not in VARIANTS:
            raise ConfigError(f"loss.variant: unknown variant {self.variant!r}; expected one of {VARIANTS}")
        object.__setattr__(self, "variant", v)
        fm = v != "gmf" if self.include_fm is None else bool(self.include_fm)
        if v == "gmf" and fm:
            raise ConfigError("loss.include_fm: the mean-flow objective is trained without the flow matching term")
        if v != "gmf" and not fm:
            raise ConfigError(f"loss.include_fm: variant {v!r} requires the flow matching term")
        object.__setattr__(self, "include_fm", fm)
        if self.sd_weight < 0:
            raise ConfigError("loss.sd_weight must be >= 0")
        if self.psd_mid not in ("midpoint", "uniform"):
            raise ConfigError("loss.psd_mid must be 'midpoint' or 'uniform'")


def _teacher(params, teacher):
    return [ad.value(p) for p in params] if teacher is None else teacher


def _ones(batch):
    return np.ones_like(batch.s)


def _sqnorm(manifold, x, r):
    return manifold.sqnorm(x, r)


# ---------------------------------------------------------------------------
# per-sample residuals (shape (M, D)) and squared norms (shape (M, 1))


def rfm_residual(model, params, batch: Batch):
    v = model.velocity(params, batch.s, batch.s, batch.xs)
    return ad.sub(v, batch.us), batch.xs


def glsd_residual(model, params, batch: Batch, teacher=None):
    x_st, dx_dt = ad.jvp(lambda t: model.flow_map(params, batch.s, t, batch.xs), [batch.t], [_ones(batch)])
    target = model.velocity(_teacher(params, teacher), batch.t, batch.t, ad.value(x_st))
    return ad.sub(dx_dt, target), x_st


def gesd_residual(model, params, batch: Batch, teacher=None):
    x_st, dx_ds = ad.jvp(lambda s: model.flow_map(params, s, batch.t, batch.xs), [batch.s], [_ones(batch)])
    tp = _teacher(params, teacher)
    v_ss = model.velocity(tp, batch.s, batch.s, batch.xs)
    _, transport = ad.jvp(lambda x: model.flow_map(tp, batch.s, batch.t, x), [batch.xs], [v_ss])
    return ad.add(dx_ds, transport), x_st


def psd_midpoints(batch: Batch, mode: str = "midpoint", rng=None):
    if mode == "midpoint":
        return 0.5 * (batch.s + batch.t)
    if rng is None:
        raise ValueError("uniform intermediate times need an rng")
    return batch.s + (batch.t - batch.s) * rng.uniform(0.0, 1.0, batch.s.shape)


def gpsd_sq_dist(model, params, batch: Batch, teacher=None, u=None):
    if u is None:
        u = psd_midpoints(batch)
    tp = _teacher(params, teacher)
    hop = model.flow_map(tp, batch.s, u, batch.xs)
    target = model.flow_map(tp, u, batch.t, hop)
    pred = model.flow_map(params, batch.s, batch.t, batch.xs)
    return model.manifold.sq_dist(pred, target)


def gmf_target(model, params, batch: Batch, teacher=None):
    """``u_s + (t - s) * D_s v_{s,t}(x_s)`` with the total derivative taken along ``(1, u_s)``."""
    m = model.manifold
    tp = _teacher(params, teacher)
    w, dw = ad.jvp(
        lambda s, x: model.velocity(tp, s, batch.t, x), [batch.s, batch.xs], [_ones(batch), batch.us]
    )
    cov = m.covariant(batch.xs, batch.us, w, dw)
    return batch.us + (batch.t - batch.s) * cov


def gmf_residual(model, params, batch: Batch, teacher=None):
    v = model.velocity(params, batch.s, batch.t, batch.xs)
    return ad.sub(v, gmf_target(model, params, batch, teacher)), batch.xs


# ---------------------------------------------------------------------------
# scalar losses


def _mean_sqnorm(manifold, r, x):
    return ad.mean(_sqnorm(manifold, x, r))


def rfm_loss(model, params, batch: Batch):
    r, x = rfm_residual(model, params, batch)
    return _mean_sqnorm(model.manifold, r, x)


def glsd_loss(model, params, batch: Batch, teacher=None):
    r, x = glsd_residual(model, params, batch, teacher)
    return _mean_sqnorm(model.manifold, r, x)


def gesd_loss(model, params, batch: Batch, teacher=None):
    r, x = gesd_residual(model, params, batch, teacher)
    return _mean_sqnorm(model.manifold, r, x)


def gpsd_loss(model, params, batch: Batch, teacher=None, u=None):
    return ad.mean(gpsd_sq_dist(model, params, batch, teacher, u))


def gmf_loss(model, params, batch: Batch, teacher=None):
    r, x = gmf_residual(model, params, batch, teacher)
    return _mean_sqnorm(model.manifold, r, x)


SD_LOSSES = {"glsd": glsd_loss, "gesd": gesd_loss, "gpsd": gpsd_loss, "gmf": gmf_loss}


def total_loss(model, params, batch: Batch, cfg: LossConfig, teacher=None, rng=None):
    """Returns ``(loss, parts)`` with ``parts = {"loss_rfm": float, "loss_sd": float}``."""
    parts = {}
    total = None
    if cfg.include_fm:
        fm = rfm_loss(model, params, batch)
        parts["loss_rfm"] = float(ad.value(fm))
        total = fm
    if cfg.variant != "rfm":
        if cfg.variant == "gpsd":
            u = psd_midpoints(batch, cfg.psd_mid, rng)
            sd = gpsd_loss(model, params, batch, teacher, u)
        else:
            sd = SD_LOSSES[cfg.variant](model, params, batch, teacher)
        parts["loss_sd"] = float(ad.value(sd))
        if cfg.include_fm:
            if cfg.sd_weight != 0:
                total = ad.add(total, ad.mul(cfg.sd_weight, sd))
        else:
            total = sd
    return total, parts
