"""Sample-quality and likelihood metrics."""

from __future__ import annotations

import json
import math

import numpy as np

from .errors import ContractError
from .inference import DEFAULT_NLL_STEPS, log_likelihood, sample_few_step

MAX_MMD_POINTS = 4096
DEFAULT_NFE = (1, 2, 5, 10, 20, 50, 100)


def _kernel_sum(manifold, a, b, kappa, block=1024):
    # fixed block order keeps the floating-point sum deterministic
    total = 0.0
    for i in range(0, len(a), block):
        total += float(np.exp(-kappa * manifold.pairwise_sq_dist(a[i : i + block], b)).sum())
    return total


def mmd(manifold, p, q, kappa: float = 1.0) -> float:
    """Biased (V-statistic) squared MMD with kernel ``exp(-kappa d_g^2)``, diagonal terms included."""
    p, q = np.atleast_2d(np.asarray(p, dtype=np.float64)), np.atleast_2d(np.asarray(q, dtype=np.float64))
    if len(p) != len(q):
        raise ContractError(f"mmd: sample sets must have equal size ({len(p)} != {len(q)})")
    if len(p) == 0:
        raise ContractError("mmd: empty sample sets")
    if not kappa > 0:
        raise ContractError("mmd: kappa must be > 0")
    n = len(p)
    kpp = _kernel_sum(manifold, p, p, kappa)
    kqq = _kernel_sum(manifold, q, q, kappa)
    kpq = _kernel_sum(manifold, p, q, kappa)
    kqp = _kernel_sum(manifold, q, p, kappa)
    # cross term averaged in both orders so the value is exactly symmetric in (p, q)
    return (kpp + kqq - (kpq + kqp)) / (n * n)


def subsample(points, rng, limit: int = MAX_MMD_POINTS):
    if len(points) <= limit:
        return points
    return points[np.sort(rng.choice(len(points), limit, replace=False))]


def nfe_sweep(model, params, test_points, prior, nfe_list=DEFAULT_NFE, seed: int = 0, kappa: float = 1.0,
              limit: int = MAX_MMD_POINTS) -> list[dict]:
    """One ``{"nfe", "mmd", "n"}`` row per requested NFE, in order."""
    if len(nfe_list) == 0:
        raise ContractError("nfe_sweep: empty NFE list")
    rng = np.random.default_rng(seed)
    test = subsample(np.asarray(test_points), rng, limit)
    x0 = prior.sample(rng, len(test))
    rows = []
    for k in nfe_list:
        xs = sample_few_step(model, params, x0, int(k))
        rows.append({"nfe": int(k), "mmd": mmd(model.manifold, xs, test, kappa), "n": len(test)})
    return rows


def test_nll(model, params, test_points, prior, n_steps: int = DEFAULT_NLL_STEPS, chunk: int = 4096):
    """Mean and standard error of the negative log-likelihood over the test set."""
    test_points = np.asarray(test_points)
    if len(test_points) == 0:
        raise ContractError("test_nll: empty test set")
    ll = np.concatenate(
        [log_likelihood(model, params, test_points[i : i + chunk], prior, n_steps)
         for i in range(0, len(test_points), chunk)]
    )
    nll = -ll
    stderr = float(np.std(nll, ddof=1) / math.sqrt(len(nll))) if len(nll) > 1 else 0.0
    return float(np.mean(nll)), stderr


def dumps_record(rec: dict) -> str:
    """One metrics line; key order fixed so reruns are byte-identical."""
    return json.dumps(rec, sort_keys=True)


def mmd_records(rows, variant, manifold_label, seed) -> list[dict]:
    return [{"variant": variant, "manifold": manifold_label, "seed": seed, "nfe": r["nfe"], "mmd": r["mmd"]}
            for r in rows]


def nll_record(mean, stderr, variant, manifold_label, seed) -> dict:
    return {"variant": variant, "manifold": manifold_label, "seed": seed, "nll_mean": mean, "nll_stderr": stderr}
