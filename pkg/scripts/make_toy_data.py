"""Regenerate the small bundled dataset in src/carmap/data/ (a 6 x 6 lattice)."""

import csv
from pathlib import Path

import numpy as np

from carmap.graph import lattice_graph
from carmap.numerics import rng_stream

OUT = Path(__file__).resolve().parents[1] / "src" / "carmap" / "data"


def main(seed: int = 11) -> None:
    rng = rng_stream(seed)
    nrow = ncol = 6
    graph = lattice_graph(nrow, ncol)
    n = graph.n
    ids = [f"A{k:02d}" for k in range(n)]
    rows, cols = np.divmod(np.arange(n), ncol)
    mu = 20.0 + 1.5 * (cols - 2.5) + rng.normal(0, 1.0, n)
    deprivation = np.round(rng.normal(0, 1, n), 3)
    cells = [np.round(mu[k] + rng.normal(0, 2.0, int(rng.integers(3, 9))), 3) for k in range(n)]
    pops = [rng.integers(50, 500, c.size) for c in cells]
    link = np.array([np.log(np.sum(p / p.sum() * np.exp(0.03 * c))) for c, p in zip(cells, pops)])
    step = np.where(rows < 3, 0.15, -0.1)
    e = np.round(rng.uniform(60, 140, n), 2)
    y = rng.poisson(e * np.exp(-0.6 + 0.05 * deprivation + step + link))

    OUT.mkdir(parents=True, exist_ok=True)
    with open(OUT / "toy_health.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["area_id", "Y", "E", "deprivation"])
        w.writerows(zip(ids, y, e, deprivation))
    with open(OUT / "toy_exposure.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["area_id", "concentration", "weight"])
        for a, c, p in zip(ids, cells, pops):
            w.writerows((a, ci, pi) for ci, pi in zip(c, p))
    with open(OUT / "toy_adjacency.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["area_i", "area_j"])
        w.writerows((ids[i], ids[j]) for i, j in graph.edges)
    with open(OUT / "toy_residuals.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["area_id", "residual"])
        w.writerows(zip(ids, np.round(np.log((y + 0.5) / e) - np.log((y + 0.5) / e).mean(), 6)))


if __name__ == "__main__":
    main()
