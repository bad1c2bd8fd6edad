"""Command-line entry point: ``gfm {train,eval,sample,density,sweep}``.

Any config field can be overridden with ``--section.key=value``. Outputs go
under ``$GFM_OUTPUT_DIR`` (default ``./runs``) unless ``--out-dir`` is given::

    <out>/<run.name>/<variant>/seed<k>/model.ckpt
                                      /train_log.jsonl
                                      /metrics.jsonl
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import data as gdata
from . import evaluation as ev
from . import inference as inf
from .config import ExperimentConfig, load_config, parse_seeds
from .errors import GFMError, UnsupportedError
from .model import atomic_write, model_from_checkpoint
from .train import loss_config, make_manifold, make_model, train, train_test

log = logging.getLogger("gfm")
OUTPUT_ENV = "GFM_OUTPUT_DIR"


def output_root(args) -> Path:
    return Path(args.out_dir or os.environ.get(OUTPUT_ENV) or "runs")


def run_dir(root: Path, cfg: ExperimentConfig, seed: int) -> Path:
    return root / cfg.run.name / loss_config(cfg).variant / f"seed{seed}"


def _jsonl(records) -> str:
    return "".join(ev.dumps_record(r) + "\n" for r in records)


def _config(args) -> ExperimentConfig:
    overrides = list(args.overrides)
    if getattr(args, "seeds", None):
        overrides.append(("run", "seeds", parse_seeds(args.seeds)))
    return load_config(args.config, overrides)


# ---------------------------------------------------------------------------
# commands


def do_train(cfg: ExperimentConfig, root: Path, train_points=None) -> list[Path]:
    m = make_manifold(cfg)
    if train_points is None:
        train_points = train_test(cfg, m)[0].points
    paths = []
    for seed in cfg.run.seeds:
        d = run_dir(root, cfg, seed)
        t0 = time.time()

        def note(rec, seed=seed, t0=t0):
            log.info("seed %d step %d loss_rfm=%s loss_sd=%s (%.0fs)", seed, rec["step"], rec["loss_rfm"],
                     rec["loss_sd"], time.time() - t0)

        res = train(cfg, seed, train_points, on_log=note)
        res.model.save(d / "model.ckpt", res.params)
        atomic_write(d / "train_log.jsonl", _jsonl(res.history))
        atomic_write(d / "config.json", json.dumps(cfg.to_dict(), sort_keys=True, indent=1) + "\n")
        paths.append(d / "model.ckpt")
    return paths


def evaluate_checkpoint(cfg: ExperimentConfig, ckpt: Path, seed: int, test_points) -> list[dict]:
    model = make_model(cfg)
    params = model.load(ckpt)
    m = model.manifold
    prior = gdata.get_prior(m)
    variant, label = loss_config(cfg).variant, m.spec.label
    rows = ev.nfe_sweep(model, params, test_points, prior, cfg.eval.nfe_list, seed, cfg.eval.kappa,
                        cfg.eval.max_points)
    recs = ev.mmd_records(rows, variant, label, seed)
    nll_pts = test_points
    if cfg.eval.nll_points and len(test_points) > cfg.eval.nll_points:
        nll_pts = ev.subsample(test_points, np.random.default_rng([seed, 2]), cfg.eval.nll_points)
    mean, se = ev.test_nll(model, params, nll_pts, prior, cfg.eval.nll_steps)
    recs.append(ev.nll_record(mean, se, variant, label, seed))
    return recs


def do_eval(cfg: ExperimentConfig, root: Path, checkpoint: str | None = None, test_points=None) -> list[dict]:
    m = make_manifold(cfg)
    if test_points is None:
        test_points = train_test(cfg, m)[1].points
    out = []
    for seed in cfg.run.seeds:
        d = run_dir(root, cfg, seed)
        ckpt = Path(checkpoint) if checkpoint else d / "model.ckpt"
        recs = evaluate_checkpoint(cfg, ckpt, seed, test_points)
        atomic_write(d / "metrics.jsonl", _jsonl(recs))
        out.extend(recs)
    return out


def do_sample(ckpt, n_samples: int, n_steps: int, seed: int, out: Path) -> np.ndarray:
    if n_samples < 1:
        raise GFMError("n_samples must be >= 1")
    model, params = model_from_checkpoint(ckpt)
    x0 = gdata.get_prior(model.manifold).sample(np.random.default_rng(seed), n_samples)
    xs = inf.sample_few_step(model, params, x0, n_steps)
    gdata.write_points_csv(out, xs)
    return xs


def do_density(ckpt, resolution: int, n_steps: int, out: Path) -> float:
    model, params = model_from_checkpoint(ckpt)
    if model.manifold.dim != 2:
        raise UnsupportedError(f"density grids need a 2-dimensional manifold, got {model.manifold}")
    coords, ld, w = inf.density_grid(model, params, gdata.get_prior(model.manifold), resolution, n_steps)
    inf.write_density_csv(out, coords, ld)
    return inf.quadrature_mass(ld, w)


def summarise(records: list[dict]) -> list[dict]:
    """Mean and standard deviation over seeds per (variant, metric)."""
    groups: dict[tuple, list] = {}
    for r in records:
        if "nfe" in r:
            key, val = (r["variant"], r["manifold"], f"mmd@{r['nfe']}"), r["mmd"]
        else:
            key, val = (r["variant"], r["manifold"], "nll"), r["nll_mean"]
        groups.setdefault(key, []).append(val)
    rows = []
    for (variant, manifold, metric), vals in groups.items():
        a = np.array(vals)
        rows.append({"variant": variant, "manifold": manifold, "metric": metric, "mean": float(a.mean()),
                     "std": float(a.std(ddof=1)) if len(a) > 1 else 0.0, "n_seeds": len(a)})
    return rows


def do_sweep(cfg: ExperimentConfig, root: Path, variants: list[str]) -> list[dict]:
    m = make_manifold(cfg)
    tr, te = train_test(cfg, m)
    allrecs = []
    for v in variants:
        vcfg = _with_variant(cfg, v)
        do_train(vcfg, root, tr.points)
        allrecs.extend(do_eval(vcfg, root, None, te.points))
    table = summarise(allrecs)
    base = root / cfg.run.name
    atomic_write(base / "sweep_metrics.jsonl", _jsonl(allrecs))
    atomic_write(base / "sweep_table.jsonl", _jsonl(table))
    atomic_write(base / "sweep_table.md", markdown_table(table))
    return table


def _with_variant(cfg: ExperimentConfig, variant: str) -> ExperimentConfig:
    c = copy.deepcopy(cfg)
    c.loss.variant = variant
    loss_config(c)  # validates
    return c


def markdown_table(rows: list[dict]) -> str:
    metrics = sorted({r["metric"] for r in rows}, key=lambda s: (s == "nll", int(s.split("@")[1]) if "@" in s else 0))
    variants = list(dict.fromkeys(r["variant"] for r in rows))
    cell = {(r["variant"], r["metric"]): f"{r['mean']:.4f} ± {r['std']:.4f}" for r in rows}
    lines = ["| variant | " + " | ".join(metrics) + " |", "|---" * (len(metrics) + 1) + "|"]
    for v in variants:
        lines.append(f"| {v} | " + " | ".join(cell.get((v, k), "") for k in metrics) + " |")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gfm", description="Few-step flow-map generative models on manifolds.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    def with_config(sp):
        sp.add_argument("--config", help="TOML experiment config (defaults are used for missing fields)")
        sp.add_argument("--seeds", help="seed list, e.g. 0..4 or 0,3")
        sp.add_argument("--out-dir", help=f"output root (default ${OUTPUT_ENV} or ./runs)")

    sp = sub.add_parser("train", help="train one model per seed")
    with_config(sp)
    sp = sub.add_parser("eval", help="NFE sweep and test NLL per seed")
    with_config(sp)
    sp.add_argument("--checkpoint", help="evaluate this checkpoint instead of the run directory's")
    sp = sub.add_parser("sample", help="dump few-step samples as CSV")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--n-samples", type=int, default=1000)
    sp.add_argument("--n-steps", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp = sub.add_parser("density", help="log-density on a 2-d lattice as CSV")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--resolution", type=int, default=100)
    sp.add_argument("--n-steps", type=int, default=inf.DEFAULT_NLL_STEPS)
    sp.add_argument("--out", required=True)
    sp = sub.add_parser("sweep", help="train and evaluate every variant x seed, then tabulate")
    with_config(sp)
    sp.add_argument("--variants", default="rfm,glsd,gesd,gpsd,gmf")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args, rest = parser.parse_known_args(argv)
    bad = [r for r in rest if not (r.startswith("--") and "=" in r and "." in r.split("=", 1)[0])]
    if bad:
        parser.error(f"unrecognised arguments: {' '.join(bad)}")
    args.overrides = rest
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s",
                        stream=sys.stderr)
    try:
        if args.cmd == "train":
            for pth in do_train(_config(args), output_root(args)):
                print(pth)
        elif args.cmd == "eval":
            for r in do_eval(_config(args), output_root(args), args.checkpoint):
                print(ev.dumps_record(r))
        elif args.cmd == "sample":
            do_sample(args.checkpoint, args.n_samples, args.n_steps, args.seed, Path(args.out))
            print(args.out)
        elif args.cmd == "density":
            mass = do_density(args.checkpoint, args.resolution, args.n_steps, Path(args.out))
            print(f"{args.out} (quadrature mass {mass:.4f})")
        elif args.cmd == "sweep":
            table = do_sweep(_config(args), output_root(args), [v.strip() for v in args.variants.split(",")])
            sys.stdout.write(markdown_table(table))
    except GFMError as e:
        print(f"gfm: error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
