"""Training loop and the glue between configs, datasets and models."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import data as gdata
from .config import ExperimentConfig
from .errors import ConfigError, TrainingDivergedError
from .interpolant import draw_batch
from .losses import LossConfig, total_loss
from .manifolds import Manifold, get_manifold
from .model import Arch, VelocityField

log = logging.getLogger(__name__)


class Adam:
    """Adam without weight decay; returns fresh parameter arrays each step."""

    def __init__(self, params, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.k = 0

    def step(self, params, grads):
        self.k += 1
        c1 = 1.0 - self.b1**self.k
        c2 = 1.0 - self.b2**self.k
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.b1 * self.m[i] + (1.0 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1.0 - self.b2) * g * g
            out.append(p - self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps))
        return out


def make_manifold(cfg: ExperimentConfig) -> Manifold:
    return get_manifold(cfg.manifold.kind, cfg.manifold.n)


def make_model(cfg: ExperimentConfig, manifold: Manifold | None = None) -> VelocityField:
    a = cfg.arch
    return VelocityField(manifold or make_manifold(cfg), Arch(a.hidden, a.layers, a.emb, a.min_freq, a.max_freq))


def loss_config(cfg: ExperimentConfig) -> LossConfig:
    return LossConfig(cfg.loss.variant, cfg.loss.sd_weight, None, cfg.loss.psd_mid)


def build_dataset(cfg: ExperimentConfig, manifold: Manifold) -> gdata.Dataset:
    d = cfg.data
    if d.source == "synthetic":
        so3 = manifold.spec.kind == "so3"
        k = d.n_components or (16 if so3 else 4)
        c = d.concentration or (50.0 if so3 else 10.0)
        return gdata.synth_wrapped_mixture(manifold, k, c, d.n_samples, d.data_seed)
    if d.source == "manifest":
        entries = gdata.load_manifest(cfg.resolve(d.manifest))
        if d.name not in entries:
            raise ConfigError(f"data.name: {d.name!r} is not in the manifest")
        e = entries[d.name]
        if get_manifold(e["manifold"], e["n"]).spec != manifold.spec:
            raise ConfigError(f"data.name: dataset {d.name!r} lives on {e['manifold']}, not {manifold}")
        return gdata.load_dataset_csv(e["path"], manifold)
    path = cfg.resolve(d.path)
    if d.source == "geodata":
        return gdata.load_geodata_csv(path)
    if d.source == "angles":
        return gdata.load_angles_csv(path, manifold.dim)
    return gdata.load_points_csv(path, manifold)


def train_test(cfg: ExperimentConfig, manifold: Manifold):
    ds = build_dataset(cfg, manifold)
    if ds.manifold.spec != manifold.spec:
        raise ConfigError(f"data: dataset lives on {ds.manifold}, config says {manifold}")
    return gdata.split(ds, cfg.data.train_fraction, cfg.data.split_seed)


@dataclass
class TrainResult:
    model: VelocityField
    params: list
    history: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)  # step -> params after that many updates


def train(cfg: ExperimentConfig, seed: int, train_points=None, on_log=None, keep=()) -> TrainResult:
    """Run the optimisation for one seed; deterministic given ``(cfg, seed)``.

    Every ``log_every`` steps (and after the last one) a record
    ``{"step", "loss_rfm", "loss_sd"}`` of the current batch is appended to
    the history and passed to ``on_log``. ``keep`` lists update counts whose
    parameters are copied into ``snapshots``.
    """
    m = make_manifold(cfg)
    model = make_model(cfg, m)
    lcfg = loss_config(cfg)
    if train_points is None:
        train_points = train_test(cfg, m)[0].points
    prior = gdata.get_prior(m)
    params = model.init_params(seed)
    opt = Adam(params, cfg.optim.lr, cfg.optim.beta1, cfg.optim.beta2)
    rng = np.random.default_rng([seed, 1])
    history, snapshots = [], {}
    keep = set(keep)
    if 0 in keep:
        snapshots[0] = [p.copy() for p in params]
    steps, every = cfg.optim.steps, cfg.optim.log_every
    for step in range(steps):
        batch = draw_batch(m, train_points, prior, rng, cfg.optim.batch)
        leaves = [ad.Tensor(p) for p in params]
        loss, parts = total_loss(model, leaves, batch, lcfg, rng=rng)
        value = float(ad.value(loss))
        if not math.isfinite(value):
            raise TrainingDivergedError(
                f"non-finite loss {value} at step {step} (seed {seed}, variant {lcfg.variant}, "
                f"manifold {m.spec.label}); batch times s in [{batch.s.min():.4g}, {batch.s.max():.4g}]"
            )
        grads = ad.grad(loss, leaves)
        params = opt.step(params, grads)
        if step + 1 in keep:
            snapshots[step + 1] = [p.copy() for p in params]
        if step % every == 0 or step == steps - 1:
            rec = {"step": step, "loss_rfm": parts.get("loss_rfm"), "loss_sd": parts.get("loss_sd")}
            history.append(rec)
            if on_log is not None:
                on_log(rec)
    return TrainResult(model, params, history, snapshots)
