"""Two-time velocity network and the flow map it induces.

``velocity(params, s, t, x)`` is ``proj_x(f(features(x), emb(s), emb(t)))`` for
an MLP ``f``; ``flow_map`` is ``exp_x((t - s) * velocity)``. Params are an
ordered list of arrays (``W0, b0, W1, b1, ...``) so the same code runs on
numpy values, reverse-mode Tensors, or under a JVP.

Checkpoint format (version 1)::

    GFMCKPT 1\\n
    <one line of JSON: {"arch": ..., "manifold": ..., "tensors": [[name, shape], ...]}>\\n
    <raw little-endian float64 data of every tensor, in header order>

JSON keys are sorted and there are no timestamps, so equal parameters give
byte-identical files.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .errors import CheckpointError, ContractError
from .manifolds import Manifold, get_manifold

CKPT_MAGIC = b"GFMCKPT 1\n"


@dataclass(frozen=True)
class Arch:
    hidden: int = 256
    layers: int = 4
    emb: int = 64  # features per time; must be even
    min_freq: float = 1.0
    max_freq: float = 1000.0

    def __post_init__(self):
        if self.hidden < 1 or self.layers < 1 or self.emb < 1:
            raise ContractError("arch: hidden, layers and emb must all be >= 1")
        if self.emb % 2:
            raise ContractError("arch: emb must be even (sin/cos pairs)")


def time_embedding(t, freqs: np.ndarray):
    """``[sin(w t), cos(w t)]`` for each frequency; ``t`` has shape ``(..., 1)``."""
    wt = ad.mul(t, freqs)
    return ad.concatenate([ad.sin(wt), ad.cos(wt)], axis=-1)


def _as_time(t, batch_shape):
    """Shape a scalar or per-sample time as ``batch_shape + (1,)``."""
    if not ad.is_traced(t):
        t = np.asarray(t, dtype=np.float64)
    shape = np.shape(ad.value(t))
    if shape == batch_shape and shape != batch_shape + (1,):
        t = ad.reshape(t, shape + (1,))
        shape = shape + (1,)
    if shape != batch_shape + (1,):
        t = ad.broadcast_to(t, batch_shape + (1,))
    return t


class VelocityField:
    """MLP velocity field ``v_{s,t}(x)`` on a manifold.

    ``nfe`` counts network evaluations (one per ``velocity`` call, whatever
    the batch size), which is what the few-step samplers report.
    """

    def __init__(self, manifold: Manifold, arch: Arch = Arch()):
        self.manifold = manifold
        self.arch = arch
        half = arch.emb // 2
        self.freqs = (
            np.geomspace(arch.min_freq, arch.max_freq, half) if half > 1 else np.array([arch.min_freq])
        )
        self.in_dim = manifold.feature_dim() + 2 * arch.emb
        self.nfe = 0

    # -- parameters ------------------------------------------------------------
    def layer_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        dims = [self.in_dim] + [self.arch.hidden] * self.arch.layers + [self.manifold.ambient_dim]
        out = []
        for i in range(len(dims) - 1):
            out.append((f"W{i}", (dims[i], dims[i + 1])))
            out.append((f"b{i}", (dims[i + 1],)))
        return out

    def param_names(self) -> list[str]:
        return [n for n, _ in self.layer_shapes()]

    def init_params(self, seed: int) -> list[np.ndarray]:
        rng = np.random.default_rng(seed)
        shapes = self.layer_shapes()
        params = []
        last = len(shapes) - 2
        for k, (name, shape) in enumerate(shapes):
            if name.startswith("b") or k == last:
                params.append(np.zeros(shape))  # zero head: v == 0 at init
            else:
                params.append(rng.standard_normal(shape) / np.sqrt(shape[0]))
        return params

    # -- evaluation --------------------------------------------------------------
    def raw(self, params, s, t, x):
        """Unprojected network output ``f(s, t, x)`` in ambient coordinates."""
        batch = np.shape(ad.value(x))[:-1]
        s, t = _as_time(s, batch), _as_time(t, batch)
        h = ad.concatenate(
            [self.manifold.features(x), time_embedding(s, self.freqs), time_embedding(t, self.freqs)],
            axis=-1,
        )
        n_layers = len(params) // 2
        for i in range(n_layers):
            h = ad.linear(h, params[2 * i], params[2 * i + 1])
            if i < n_layers - 1:
                h = ad.silu(h)
        return h

    def velocity(self, params, s, t, x):
        self.nfe += 1
        return self.manifold.proj(x, self.raw(params, s, t, x))

    def flow_map(self, params, s, t, x):
        batch = np.shape(ad.value(x))[:-1]
        v = self.velocity(params, s, t, x)
        dt = ad.sub(_as_time(t, batch), _as_time(s, batch))
        return self.manifold.exp(x, ad.mul(dt, v))

    # -- checkpoints ---------------------------------------------------------------
    def header(self) -> dict:
        spec = self.manifold.spec
        return {"arch": asdict(self.arch), "manifold": {"kind": spec.kind, "n": spec.n}}

    def save(self, path, params) -> None:
        names = self.param_names()
        if len(params) != len(names):
            raise CheckpointError("parameter count does not match the architecture")
        head = self.header()
        head["tensors"] = [[n, list(np.shape(p))] for n, p in zip(names, params)]
        blob = CKPT_MAGIC + json.dumps(head, sort_keys=True).encode() + b"\n"
        blob += b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in params)
        atomic_write(path, blob)

    def load(self, path) -> list[np.ndarray]:
        head, params = read_checkpoint(path)
        mine = self.header()
        if head["arch"] != mine["arch"] or head["manifold"] != mine["manifold"]:
            raise CheckpointError(
                f"checkpoint {path} was written for {head['manifold']} / {head['arch']}, "
                f"expected {mine['manifold']} / {mine['arch']}"
            )
        shapes = [tuple(s) for _, s in self.layer_shapes()]
        if [p.shape for p in params] != shapes:
            raise CheckpointError("checkpoint tensor shapes do not match the architecture")
        return params


def read_checkpoint(path) -> tuple[dict, list[np.ndarray]]:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(CKPT_MAGIC):
        raise CheckpointError(f"{path}: not a version-1 checkpoint")
    nl = data.index(b"\n", len(CKPT_MAGIC))
    try:
        head = json.loads(data[len(CKPT_MAGIC) : nl])
    except json.JSONDecodeError as e:
        raise CheckpointError(f"{path}: corrupt header ({e})") from None
    off = nl + 1
    params = []
    for _, shape in head["tensors"]:
        n = int(np.prod(shape, dtype=np.int64))
        if off + 8 * n > len(data):
            raise CheckpointError(f"{path}: truncated tensor data")
        params.append(np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(shape).astype(np.float64))
        off += 8 * n
    if off != len(data):
        raise CheckpointError(f"{path}: trailing bytes after tensor data")
    return head, params


def model_from_checkpoint(path) -> tuple[VelocityField, list[np.ndarray]]:
    head, _ = read_checkpoint(path)
    m = get_manifold(head["manifold"]["kind"], head["manifold"]["n"] or 2)
    model = VelocityField(m, Arch(**head["arch"]))
    return model, model.load(path)


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def atomic_write(path, data: bytes | str) -> None:
    """Write via a temp file in the same directory, then rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data.encode() if isinstance(data, str) else data)
        os.chmod(tmp, 0o666 & ~_umask())  # mkstemp creates 0600
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class FieldModel:
    """A hand-written field with the same interface as :class:`VelocityField`.

    ``fn(params, s, t, x)`` returns an ambient vector; it is tangent-projected
    like the network output. Used for analytic oracles.
    """

    def __init__(self, manifold: Manifold, fn):
        self.manifold = manifold
        self.fn = fn
        self.nfe = 0

    def velocity(self, params, s, t, x):
        self.nfe += 1
        return self.manifold.proj(x, self.fn(params, s, t, x))

    flow_map = VelocityField.flow_map


class AffineField(FieldModel):
    """``v(x) = proj_x(c + K x)`` with ``params = [c, K]``, independent of time.

    Constant ``c`` on the torus and a rotation generator ``K`` on the sphere
    or SO(3) give flows whose exact flow map is ``exp_x((t - s) v(x))``.
    """

    def __init__(self, manifold: Manifold):
        super().__init__(manifold, self._affine)

    @staticmethod
    def _affine(params, s, t, x):
        c, k = params
        shape = np.shape(ad.value(x))
        kx = ad.sum(ad.mul(k, ad.reshape(x, shape[:-1] + (1, shape[-1]))), axis=-1)
        return ad.add(c, kx)
