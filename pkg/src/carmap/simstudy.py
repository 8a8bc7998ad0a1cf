"""Simulation studies: spatial confounding (study 1) and within-area exposure
variation (study 2), with bias / RMSE / coverage summaries."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.spatial import cKDTree
from scipy.stats import qmc

from . import comparators, mcmc
from .graph import AreaGraph, from_adjacency_list
from .model import ExposureSet, HealthDataset
from .numerics import jittered_cholesky, matern_covariance, rng_stream

log = logging.getLogger(__name__)

POLLUTION_MEAN = 20.0
POLLUTION_RANGE = 75.0
RISK_INCREMENT = 2.0
LINEAR_SLOPE = 1.225
N_AREAS = 323
STUDY1_MODELS = ("glm", "car", "local", "hh")
STUDY2_MODELS = ("local", "local-agg")


class StudyError(RuntimeError):
    pass


# ----------------------------------------------------------------------------
# geography


@dataclass(frozen=True, eq=False)
class Layout:
    coords: np.ndarray
    graph: AreaGraph

    @property
    def n(self) -> int:
        return self.graph.n


def knn_graph(coords, k: int = 8) -> AreaGraph:
    """Symmetrised k-nearest-neighbour graph."""
    coords = np.asarray(coords, dtype=float)
    _, idx = cKDTree(coords).query(coords, k=k + 1)
    pairs = [(i, int(j)) for i in range(len(coords)) for j in idx[i, 1:]]
    return from_adjacency_list(pairs, n=len(coords))


@lru_cache(maxsize=8)
def default_layout(n: int = N_AREAS, size: float = 600.0, k: int = 8) -> Layout:
    """Deterministic quasi-random centroids on a ``size`` x ``size`` square."""
    pts = qmc.Halton(d=2, scramble=False).random(n + 1)[1:]
    coords = pts * size
    return Layout(coords, knn_graph(coords, k))


def load_layout(centroids_csv, adjacency_csv) -> Layout:
    """Layout from ``area_id,x,y`` centroids and an ``area_i,area_j`` edge list."""
    from . import io

    ids, xy = [], []
    for line, _, row in io._rows(centroids_csv, ("area_id", "x", "y")):
        ids.append(row[0])
        xy.append([io._number(centroids_csv, row[j], line, j + 1) for j in (1, 2)])
    return Layout(np.asarray(xy), io.read_adjacency(adjacency_csv, ids))


@lru_cache(maxsize=16)
def _gp_factor(coords_key: bytes, n: int, variance: float, length: float) -> np.ndarray:
    coords = np.frombuffer(coords_key).reshape(n, 2)
    return jittered_cholesky(matern_covariance(coords, variance, length))


def gp_factor(coords, variance: float, length: float) -> np.ndarray:
    coords = np.ascontiguousarray(coords, dtype=float)
    return _gp_factor(coords.tobytes(), coords.shape[0], float(variance), float(length))


# ----------------------------------------------------------------------------
# generators


def generate_pollution_surface(
    coords, rng: np.random.Generator, variance: float = 16.0, mean: float = POLLUTION_MEAN,
    length: float = POLLUTION_RANGE,
) -> np.ndarray:
    """One Matérn(5/2) Gaussian-process draw with the given mean at every centroid."""
    chol = gp_factor(coords, variance, length)
    return mean + chol @ rng.standard_normal(chol.shape[0])


def _rescale(x: np.ndarray, sd: float) -> np.ndarray:
    x = x - x.mean()
    return x * (sd / x.std(ddof=1))


def cluster_partition(coords, graph: AreaGraph, n_clusters: int, rng: np.random.Generator) -> np.ndarray:
    """k-means on centroids, then every cluster made graph-connected.

    Fragments cut off from their cluster's largest piece are handed to the
    neighbouring cluster they share most edges with.
    """
    coords = np.asarray(coords, dtype=float)
    seed = int(rng.integers(2**31))
    _, labels = kmeans2(coords, n_clusters, minit="++", seed=seed)
    labels = np.asarray(labels, dtype=np.int64)
    e = graph.edge_array
    for _ in range(graph.n):
        changed = False
        for c in range(n_clusters):
            members = np.flatnonzero(labels == c)
            if members.size == 0:
                continue
            inside = np.isin(e[:, 0], members) & np.isin(e[:, 1], members)
            sub = from_adjacency_list(
                [(int(a), int(b)) for a, b in e[inside]], ids=[int(m) for m in members]
            ) if inside.any() else None
            comp = sub.components() if sub is not None else np.arange(members.size)
            if comp.max() == 0:
                continue
            main = np.argmax(np.bincount(comp))
            for frag in set(comp.tolist()) - {main}:
                piece = members[comp == frag]
                nb = np.concatenate([graph.neighbours(int(k)) for k in piece])
                other = labels[nb][labels[nb] != c]
                if other.size:
                    labels[piece] = np.bincount(other).argmax()
                    changed = True
        if not changed:
            break
    return labels


def generate_confounding(
    scenario: str,
    sd_phi: float,
    coords,
    graph: AreaGraph,
    rng: np.random.Generator,
    step_size: float = 0.5,
    n_clusters: int = 5,
) -> np.ndarray:
    """Unmeasured spatial confounder for scenarios A-D.

    A: independent; B: smooth with range 37.5; C: smooth with range 75; all
    three rescaled to empirical SD ``sd_phi``. D: a range-75 smooth surface
    rescaled to ``sd_phi`` plus piecewise-constant offsets on
    ``n_clusters`` contiguous clusters: one cluster at ``-step_size``, one at
    ``+step_size`` and the rest at zero, randomly assigned.
    """
    n = graph.n
    if scenario == "A":
        return _rescale(rng.standard_normal(n), sd_phi)
    if scenario == "B":
        return _rescale(gp_factor(coords, 1.0, POLLUTION_RANGE / 2) @ rng.standard_normal(n), sd_phi)
    if scenario == "C":
        return _rescale(gp_factor(coords, 1.0, POLLUTION_RANGE) @ rng.standard_normal(n), sd_phi)
    if scenario == "D":
        smooth = _rescale(gp_factor(coords, 1.0, POLLUTION_RANGE) @ rng.standard_normal(n), sd_phi)
        labels = cluster_partition(coords, graph, n_clusters, rng)
        levels = np.zeros(n_clusters)
        levels[0], levels[-1] = -step_size, step_size
        offsets = rng.permutation(levels)
        return smooth + offsets[labels]
    raise ValueError(f"unknown confounding scenario {scenario!r}")


def within_area_variance(mu, mode: str, sd: float, slope: float = LINEAR_SLOPE) -> np.ndarray:
    """Per-area variances of the within-area concentrations.

    ``independent``: ``sd**2`` everywhere. ``linear``: ``a + b * mu`` with
    ``b = min(slope, sd**2 / mean(mu))`` and ``a = sd**2 - b * mean(mu)``, so
    the across-area average variance is ``sd**2``.
    """
    mu = np.asarray(mu, dtype=float)
    if mode == "independent":
        return np.full(mu.shape, float(sd) ** 2)
    if mode == "linear":
        m = float(np.mean(mu))
        b = min(slope, sd**2 / m) if m > 0 else slope
        var = sd**2 - b * m + b * mu
        if np.any(var < 0):
            raise ValueError("linear coupling produced a negative within-area variance")
        return var
    raise ValueError(f"unknown mean-variance mode {mode!r}")


def generate_within_area(
    mu_k: float, mode: str, sd: float, q_k: int, rng: np.random.Generator,
    mean_mu: float | None = None, slope: float = LINEAR_SLOPE,
) -> np.ndarray:
    """``q_k`` Gaussian concentrations around ``mu_k``.

    In ``linear`` mode the variance is ``a + b * mu_k`` calibrated against the
    across-area mean ``mean_mu`` (see :func:`within_area_variance`).
    """
    if q_k < 1:
        raise ValueError("need at least one concentration per area")
    if mode == "independent":
        var = sd**2
    elif mode == "linear":
        if mean_mu is None:
            raise ValueError("linear mode needs the across-area mean")
        b = min(slope, sd**2 / mean_mu) if mean_mu > 0 else slope
        var = sd**2 - b * mean_mu + b * mu_k
    else:
        raise ValueError(f"unknown mean-variance mode {mode!r}")
    if var < 0:
        raise ValueError(f"negative within-area variance {var}")
    return mu_k + math.sqrt(var) * rng.standard_normal(q_k)


def generate_disease(R, rng: np.random.Generator, e_range=(70.0, 130.0)) -> tuple[np.ndarray, np.ndarray]:
    R = np.asarray(R, dtype=float)
    if np.any(R < 0):
        raise ValueError("relative risks must be non-negative")
    e = rng.uniform(e_range[0], e_range[1], R.size)
    return e, rng.poisson(e * R)


def draw_cell_counts(n: int, rng: np.random.Generator, dist: str = "uniform") -> np.ndarray:
    """Number of concentrations per area: U{10..400}, or log-uniform on [11, 4889]."""
    if dist == "uniform":
        return rng.integers(10, 401, n)
    if dist == "heavy":
        return np.round(np.exp(rng.uniform(np.log(11), np.log(4889), n))).astype(np.int64)
    raise ValueError(f"unknown cell-count distribution {dist!r}")


def exposure_summary(exposures: ExposureSet) -> dict[str, float]:
    """Cells per area and within-area spread, for reporting alongside a study."""
    q = exposures.sizes
    sd = np.array([np.sqrt(np.sum(p * (w - np.sum(p * w)) ** 2)) for w, p in
                   (exposures.area(k) for k in range(exposures.n))])
    return {
        "cells_min": int(q.min()),
        "cells_median": float(np.median(q)),
        "cells_max": int(q.max()),
        "within_sd_mean": float(sd.mean()),
        "within_sd_max": float(sd.max()),
    }


# ----------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class MetricRow:
    bias_pct: float
    rmse_pct: float
    coverage_pct: float


def evaluate(estimates: Sequence[float], intervals: Sequence[tuple[float, float]], truth: float) -> MetricRow:
    if truth == 0:
        raise ValueError("percentage metrics need a non-zero true value")
    est = np.asarray(estimates, dtype=float)
    iv = np.asarray(intervals, dtype=float).reshape(-1, 2)
    if est.size == 0 or iv.shape[0] != est.size:
        raise ValueError("need one interval per estimate")
    err = est - truth
    bias = 100.0 * err.mean() / truth
    rmse = 100.0 * math.sqrt(np.mean(err**2)) / abs(truth)
    cover = 100.0 * np.mean((iv[:, 0] <= truth) & (truth <= iv[:, 1]))
    return MetricRow(float(bias), float(rmse), float(cover))


# ----------------------------------------------------------------------------
# scenarios and studies


@dataclass(frozen=True)
class SimScenario:
    """One simulation scenario; ``study`` 1 uses point exposures, 2 within-area ones."""

    name: str = "scenario"
    study: int = 1
    confounding: str = "A"
    sd_phi: float = 0.1
    risk: float = 1.05
    within_sd: float = 1.0
    coupling: str = "independent"
    replicates: int = 100
    seed: int = 1
    pollution_variance: float = 16.0
    variance_slope: float = LINEAR_SLOPE
    step_size: float = 0.5
    cell_counts: str = "uniform"
    n_areas: int = N_AREAS

    def __post_init__(self):
        if self.study not in (1, 2):
            raise ValueError("study must be 1 or 2")
        if self.confounding not in ("A", "B", "C", "D"):
            raise ValueError("confounding must be one of A, B, C, D")
        if self.sd_phi <= 0 or self.within_sd < 0 or self.pollution_variance <= 0:
            raise ValueError("standard deviations and variances must be positive")
        if self.risk <= 0 or self.risk == 1.0:
            raise ValueError("risk must be positive and different from 1")
        if self.coupling not in ("independent", "linear"):
            raise ValueError("coupling must be 'independent' or 'linear'")
        if self.replicates < 1:
            raise ValueError("need at least one replicate")

    @property
    def alpha(self) -> float:
        """Exposure effect giving relative risk ``risk`` per 2-unit increase."""
        return math.log(self.risk) / RISK_INCREMENT

    @classmethod
    def from_dict(cls, d: dict) -> "SimScenario":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown scenario fields {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SimData:
    data: HealthDataset
    exposures: ExposureSet
    graph: AreaGraph
    phi: np.ndarray
    truth: float


def simulate_replicate(scenario: SimScenario, replicate: int, layout: Layout | None = None) -> SimData:
    """Generate replicate ``replicate`` of ``scenario``; deterministic in (seed, replicate)."""
    layout = layout or default_layout(scenario.n_areas)
    n = layout.n
    rng = rng_stream(scenario.seed, replicate, 0)
    # the number of cells per area is a fixed feature of the geography
    q = draw_cell_counts(n, rng_stream(scenario.seed, 10**9), scenario.cell_counts)
    mu = generate_pollution_surface(layout.coords, rng, scenario.pollution_variance)
    phi = generate_confounding(
        scenario.confounding, scenario.sd_phi, layout.coords, layout.graph, rng, scenario.step_size
    )
    alpha = scenario.alpha
    if scenario.study == 1:
        exposures = ExposureSet.point(mu)
        log_link = alpha * mu
    else:
        mean_mu = float(mu.mean())
        cells = [
            generate_within_area(mu[k], scenario.coupling, scenario.within_sd, int(q[k]), rng,
                                 mean_mu, scenario.variance_slope)
            for k in range(n)
        ]
        exposures = ExposureSet.from_lists(cells)
        log_link = exposures.log_aggregate_links(alpha)
        # intercept chosen so counts stay on the scale of E even at large alpha
        log_link = log_link - log_link.mean()
    e, y = generate_disease(np.exp(phi + log_link), rng)
    data = HealthDataset.from_arrays(y, e)
    return SimData(data, exposures, layout.graph, phi, alpha)


def _fit_seed(scenario: SimScenario, replicate: int) -> int:
    return int(np.random.SeedSequence(scenario.seed, spawn_key=(replicate, 7)).generate_state(1)[0])


def fit_model(model: str, sim: SimData, config: mcmc.FitConfig, hh_q: int = 50) -> tuple[float, float, float]:
    """(estimate, lo95, hi95) of the exposure effect under ``model``."""
    if model == "glm":
        fit = comparators.fit_glm(sim.data, sim.exposures.weighted_means())
        return fit["alpha"]
    if model == "hh":
        traces = comparators.fit_hh(sim.data, sim.exposures.weighted_means(), sim.graph, hh_q, config)
    else:
        spec = mcmc.MODEL_PRESETS[model]
        traces = mcmc.run_chains(sim.data, sim.exposures, sim.graph, spec, config)
    mean, _, lo, hi = mcmc.posterior_alpha(traces)
    return mean, lo, hi


@dataclass
class ReplicateResult:
    replicate: int
    estimates: dict[str, tuple[float, float, float] | None]
    errors: dict[str, str] = field(default_factory=dict)


def run_replicate(scenario: SimScenario, models: Sequence[str], config: mcmc.FitConfig,
                  replicate: int, hh_q: int = 50) -> ReplicateResult:
    sim = simulate_replicate(scenario, replicate)
    cfg = replace(config, seed=_fit_seed(scenario, replicate), workers=1)
    out = ReplicateResult(replicate, {})
    for m in models:
        try:
            out.estimates[m] = fit_model(m, sim, cfg, hh_q)
        except (RuntimeError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            log.warning("replicate %d model %s failed: %s", replicate, m, exc)
            out.estimates[m] = None
            out.errors[m] = str(exc)
    return out


def _replicate_job(args):
    return run_replicate(*args)


@dataclass
class MetricTable:
    scenario: SimScenario
    rows: dict[str, MetricRow]
    n_ok: dict[str, int]
    n_failed: dict[str, int]
    replicates: list[ReplicateResult] = field(repr=False, default_factory=list)

    def records(self) -> list[dict]:
        return [
            {
                "scenario": self.scenario.name,
                "model": m,
                "bias_pct": r.bias_pct,
                "rmse_pct": r.rmse_pct,
                "coverage_pct": r.coverage_pct,
                "n_ok": self.n_ok[m],
                "n_failed": self.n_failed[m],
            }
            for m, r in self.rows.items()
        ]


def run_study(
    scenario: SimScenario,
    models: Sequence[str],
    config: mcmc.FitConfig,
    workers: int | None = None,
    hh_q: int = 50,
    max_failure_rate: float = 0.05,
) -> MetricTable:
    """Simulate every replicate, fit each model and aggregate bias/RMSE/coverage.

    Replicate ``r`` uses random streams derived from ``(scenario.seed, r)``,
    so the table does not depend on ``workers``.
    """
    if workers is None:
        workers = int(os.environ.get("SRE_THREADS", "1"))
    jobs = [(scenario, tuple(models), config, r, hh_q) for r in range(scenario.replicates)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate_job, jobs))
    else:
        results = [_replicate_job(j) for j in jobs]
    results.sort(key=lambda r: r.replicate)
    rows, n_ok, n_failed = {}, {}, {}
    for m in models:
        got = [r.estimates[m] for r in results if r.estimates[m] is not None]
        n_ok[m] = len(got)
        n_failed[m] = len(results) - len(got)
        if n_failed[m] > max_failure_rate * len(results):
            raise StudyError(
                f"model {m}: {n_failed[m]} of {len(results)} replicate fits failed"
            )
        est = [g[0] for g in got]
        iv = [(g[1], g[2]) for g in got]
        rows[m] = evaluate(est, iv, scenario.alpha)
    return MetricTable(scenario, rows, n_ok, n_failed, results)


def study1_scenarios(replicates: int = 100, seed: int = 2014, **overrides) -> list[SimScenario]:
    """The eight spatial-confounding scenarios (A-D by SD 0.1 / 0.01)."""
    out = []
    for conf in "ABCD":
        for sd in (0.1, 0.01):
            out.append(SimScenario(name=f"{conf}-sd{sd}", study=1, confounding=conf, sd_phi=sd,
                                   risk=1.05, replicates=replicates, seed=seed, **overrides))
    return out


def study2_scenarios(replicates: int = 100, seed: int = 2015, **overrides) -> list[SimScenario]:
    """The eight within-area-variation scenarios (risk x SD x coupling)."""
    out = []
    for risk in (1.05, 1.5):
        for sd in (1.0, 10.0):
            for coupling in ("independent", "linear"):
                label = "Indep" if coupling == "independent" else "Linear"
                out.append(SimScenario(
                    name=f"{risk}-SD{sd:g}-{label}", study=2, confounding="A", sd_phi=0.01,
                    risk=risk, within_sd=sd, coupling=coupling, replicates=replicates,
                    seed=seed, **overrides,
                ))
    return out
