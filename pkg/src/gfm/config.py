"""Experiment configuration: TOML file plus ``--section.key=value`` overrides."""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib


def read_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None


@dataclass
class ManifoldCfg:
    kind: str = "torus"
    n: int = 2


@dataclass
class DataCfg:
    source: str = "synthetic"  # synthetic | geodata | angles | points | manifest
    path: str = ""
    manifest: str = ""
    name: str = ""
    n_components: int = 0  # 0: per-manifold default
    concentration: float = 0.0
    n_samples: int = 25_000
    data_seed: int = 0
    train_fraction: float = 0.8
    split_seed: int = 0


@dataclass
class LossCfg:
    variant: str = "glsd"
    sd_weight: float = 1.0
    psd_mid: str = "midpoint"


@dataclass
class ArchCfg:
    hidden: int = 256
    layers: int = 4
    emb: int = 64
    min_freq: float = 1.0
    max_freq: float = 1000.0


@dataclass
class OptimCfg:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    steps: int = 50_000
    batch: int = 512
    log_every: int = 100


@dataclass
class EvalCfg:
    nfe_list: list = field(default_factory=lambda: [1, 2, 5, 10, 20, 50, 100])
    nll_steps: int = 100
    kappa: float = 1.0
    max_points: int = 4096
    nll_points: int = 0  # 0: whole test set


@dataclass
class RunCfg:
    name: str = "run"
    seeds: list = field(default_factory=lambda: [0])


@dataclass
class ExperimentConfig:
    manifold: ManifoldCfg = field(default_factory=ManifoldCfg)
    data: DataCfg = field(default_factory=DataCfg)
    loss: LossCfg = field(default_factory=LossCfg)
    arch: ArchCfg = field(default_factory=ArchCfg)
    optim: OptimCfg = field(default_factory=OptimCfg)
    eval: EvalCfg = field(default_factory=EvalCfg)
    run: RunCfg = field(default_factory=RunCfg)
    base_dir: str = field(default=".", compare=False)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d

    def resolve(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else Path(self.base_dir) / q


def _coerce(section: str, key: str, default, value):
    name = f"{section}.{key}"
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{name}: expected a boolean, got {value!r}")
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{name}: expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{name}: expected a list, got {value!r}")
        return value
    return value


def _apply(cfg: ExperimentConfig, raw: dict) -> None:
    sections = {f.name for f in fields(cfg) if f.name != "base_dir"}
    for sec, table in raw.items():
        if sec not in sections:
            raise ConfigError(f"unknown config section {sec!r}")
        if not isinstance(table, dict):
            raise ConfigError(f"config section {sec!r} must be a table")
        obj = getattr(cfg, sec)
        known = {f.name: f for f in fields(obj)}
        for key, val in table.items():
            if key not in known:
                raise ConfigError(f"unknown config field {sec}.{key}")
            setattr(obj, key, _coerce(sec, key, getattr(obj, key), val))


def parse_override(text: str) -> tuple[str, str, object]:
    """``section.key=value`` with a TOML literal value (bare words are strings)."""
    text = text[2:] if text.startswith("--") else text
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like section.key=value")
    lhs, rhs = text.split("=", 1)
    if lhs.count(".") != 1:
        raise ConfigError(f"override {lhs!r} must name section.key")
    sec, key = lhs.split(".")
    try:
        val = tomllib.loads(f"v = {rhs}")["v"]
    except tomllib.TOMLDecodeError:
        val = rhs
    return sec, key, val


def parse_seeds(text: str) -> list[int]:
    """``"0..4"`` (inclusive) or ``"0,1,2"``."""
    try:
        if ".." in text:
            a, b = text.split("..")
            return list(range(int(a), int(b) + 1))
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"run.seeds: cannot parse {text!r}") from None


def load_config(path=None, overrides=()) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if path is not None:
        _apply(cfg, read_toml(path))
        cfg.base_dir = str(Path(path).resolve().parent)
    for ov in overrides:
        sec, key, val = parse_override(ov) if isinstance(ov, str) else ov
        if sec == "run" and key == "seeds" and isinstance(val, str):
            val = parse_seeds(val)
        _apply(cfg, {sec: {key: val}})
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    from .losses import LossConfig
    from .manifolds import get_manifold
    from .model import Arch

    try:
        get_manifold(cfg.manifold.kind, cfg.manifold.n)
    except Exception as e:
        raise ConfigError(f"manifold.kind: {e}") from None
    if cfg.manifold.n < 1:
        raise ConfigError("manifold.n must be >= 1")
    LossConfig(cfg.loss.variant, cfg.loss.sd_weight, None, cfg.loss.psd_mid)
    try:
        Arch(cfg.arch.hidden, cfg.arch.layers, cfg.arch.emb, cfg.arch.min_freq, cfg.arch.max_freq)
    except Exception as e:
        raise ConfigError(f"arch: {e}") from None
    o = cfg.optim
    if o.batch < 1:
        raise ConfigError("optim.batch must be >= 1")
    if o.steps < 0:
        raise ConfigError("optim.steps must be >= 0")
    if not o.lr > 0:
        raise ConfigError("optim.lr must be > 0")
    if not (0 <= o.beta1 < 1 and 0 <= o.beta2 < 1):
        raise ConfigError("optim.beta1/beta2 must lie in [0, 1)")
    if o.log_every < 1:
        raise ConfigError("optim.log_every must be >= 1")
    if not cfg.run.seeds:
        raise ConfigError("run.seeds must be nonempty")
    if not all(isinstance(s, int) for s in cfg.run.seeds):
        raise ConfigError("run.seeds must be integers")
    if not cfg.eval.nfe_list or not all(isinstance(k, int) and k >= 1 for k in cfg.eval.nfe_list):
        raise ConfigError("eval.nfe_list must be a nonempty list of positive integers")
    if not cfg.eval.kappa > 0:
        raise ConfigError("eval.kappa must be > 0")
    d = cfg.data
    if d.source not in ("synthetic", "geodata", "angles", "points", "manifest"):
        raise ConfigError(f"data.source: unknown source {d.source!r}")
    if d.source in ("geodata", "angles", "points") and not cfg.resolve(d.path).is_file():
        raise ConfigError(f"data.path: file not found: {d.path!r}")
    if d.source == "manifest" and not cfg.resolve(d.manifest).is_file():
        raise ConfigError(f"data.manifest: file not found: {d.manifest!r}")
    if not 0 < d.train_fraction < 1:
        raise ConfigError("data.train_fraction must lie in (0, 1)")
