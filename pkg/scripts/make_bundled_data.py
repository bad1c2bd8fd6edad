"""Regenerate the small synthetic stand-in datasets under ``data/``.

Each file is a seed-0 wrapped-normal mixture in the native CSV format of its
manifold; ``data/manifest.toml`` lists them for ``data.source = "manifest"``.
"""

from pathlib import Path

from gfm.data import default_synthetic, write_dataset_csv
from gfm.manifolds import get_manifold

N_ROWS = 2000
DATASETS = {
    "sphere_mixture": ("sphere", 2),
    "torus2_mixture": ("torus", 2),
    "torus7_mixture": ("torus", 7),
    "so3_mixture": ("so3", 3),
    "poincare2_mixture": ("poincare", 2),
}


def main(out=Path(__file__).resolve().parent.parent / "data"):
    out.mkdir(exist_ok=True)
    lines = []
    for name, (kind, n) in DATASETS.items():
        ds = default_synthetic(get_manifold(kind, n), N_ROWS, seed=0)
        write_dataset_csv(out / f"{name}.csv", ds)
        lines += [f"[datasets.{name}]", f'path = "{name}.csv"', f'manifold = "{kind}"', f"n = {n}", ""]
    (out / "manifest.toml").write_text("\n".join(lines))


if __name__ == "__main__":
    main()
