"""Metropolis-within-Gibbs fitting, multi-chain execution and posterior summaries.

One sweep updates, in order: beta (block random walk), alpha (random walk),
theta (single-site), tau2 (Gibbs), rho (logit random walk), lambda (per
class), allocations (discrete Gibbs) and delta. Blocks absent from the model
are skipped. Every block draws from its own random stream keyed by
``(seed, chain_id, block)``, so switching a block off never shifts the
randomness seen by the others.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from . import _kernels as K
from .glm import poisson_irls
from .graph import AreaGraph
from .localcluster import initial_cluster_state
from .model import LINKS, ExposureSet, HealthDataset
from .numerics import rng_stream

log = logging.getLogger(__name__)

RESIDUALS = {"none": K.RESID_NONE, "car": K.RESID_CAR, "local": K.RESID_LOCAL, "hh": K.RESID_HH}

DEFAULT_SCALES = {
    "beta": 1.0,
    "alpha": 1.0,
    "theta": 2.0,
    "rho": 0.5,
    "lambda": 2.0,
    "delta": 5.0,
    "gamma": 1.0,
}
_TARGET = {"beta": 0.3, "alpha": 0.44, "theta": 0.44, "rho": 0.44, "lambda": 0.45, "delta": 0.45, "gamma": 0.25}
_BLOCK = {"beta": K.BETA, "alpha": K.ALPHA, "theta": K.THETA, "rho": K.RHO,
          "lambda": K.LAMBDA, "delta": K.DELTA, "gamma": K.GAMMA}
_ALL_BLOCKS = {**_BLOCK, "tau2": K.TAU2, "alloc": K.ALLOC}
_SCALE_BOUNDS = {"lambda": (1e-4, 20.0), "delta": (1e-3, 200.0), "rho": (1e-3, 20.0)}


@dataclass(frozen=True)
class FitConfig:
    n_iterations: int = 20_000
    burn_in: int = 10_000
    thin: int = 10
    n_chains: int = 1
    seed: int = 0
    beta_prior_var: float = 1e5
    alpha_prior_var: float = 1e5
    tau2_a: float = 0.001
    tau2_b: float = 0.001
    delta_max: float = 100.0
    gamma_prior_var: float = 1e3
    proposal_scales: dict = field(default_factory=dict)
    adapt_every: int = 100
    workers: int | None = None
    # local models: fraction of burn-in with theta held at zero while the intercepts settle
    theta_warmup: float = 0.25
    # testing aids: hold named blocks at their initial values, or drop the likelihood
    fixed_blocks: tuple = ()
    likelihood: bool = True

    def __post_init__(self):
        if not 0 <= self.burn_in < self.n_iterations:
            raise ValueError("need 0 <= burn_in < n_iterations")
        if self.thin < 1 or self.n_chains < 1:
            raise ValueError("thin and n_chains must be at least 1")
        if self.adapt_every < 1:
            raise ValueError("adapt_every must be positive")
        if not 0.0 <= self.theta_warmup <= 1.0:
            raise ValueError("theta_warmup must lie in [0, 1]")
        unknown = set(self.proposal_scales) - set(DEFAULT_SCALES)
        if unknown:
            raise ValueError(f"unknown proposal blocks {sorted(unknown)}")
        unknown = set(self.fixed_blocks) - set(_ALL_BLOCKS)
        if unknown:
            raise ValueError(f"unknown fixed blocks {sorted(unknown)}")

    @property
    def n_keep(self) -> int:
        return (self.n_iterations - self.burn_in) // self.thin


@dataclass(frozen=True)
class ModelSpec:
    residual: str = "local"
    link: str = "ecological"
    G: int = 5
    increment: float = 1.0
    hh_q: int = 50

    def __post_init__(self):
        if self.residual not in RESIDUALS:
            raise ValueError(f"residual model must be one of {sorted(RESIDUALS)}")
        if self.link not in LINKS:
            raise ValueError(f"link must be one of {LINKS}")
        if self.residual == "local" and (self.G < 3 or self.G % 2 == 0):
            raise ValueError("the local model needs an odd number of intercepts G >= 3")
        if self.hh_q < 0:
            raise ValueError("hh_q must be non-negative")


MODEL_PRESETS = {
    "bayes-glm": ModelSpec("none", "ecological"),
    "car": ModelSpec("car", "ecological"),
    "local": ModelSpec("local", "ecological"),
    "local-agg": ModelSpec("local", "aggregate"),
    "hh": ModelSpec("hh", "ecological"),
}


@dataclass
class ChainTrace:
    """Retained draws of one chain.

    ``samples`` maps parameter name to an array whose first axis is the
    retained draw. Vector parameters (``beta``, ``lambda``, ``phi``) are 2-D.
    ``lambda_ref`` is the allocation-weighted mean intercept of each draw.
    """

    chain_id: int
    iterations: np.ndarray
    samples: dict[str, np.ndarray]
    acceptance: dict[str, float]
    covariate_names: tuple[str, ...]
    area_ids: tuple[str, ...]
    scales: dict[str, float] = field(default_factory=dict)

    def __len__(self) -> int:
        return self.iterations.size

    def scalar_columns(self) -> dict[str, np.ndarray]:
        """Flattened per-parameter columns except the per-area random effects."""
        cols = {}
        for j, name in enumerate(self.covariate_names):
            cols[f"beta_{name}"] = self.samples["beta"][:, j]
        for key in ("alpha", "tau2", "rho", "delta"):
            if key in self.samples:
                cols[key] = self.samples[key]
        if "lambda" in self.samples:
            lam = self.samples["lambda"] - self.samples["lambda_ref"][:, None]
            for g in range(lam.shape[1]):
                cols[f"lambda_{g + 1}"] = lam[:, g]
        return cols

    def columns(self) -> dict[str, np.ndarray]:
        cols = self.scalar_columns()
        if "lambda" in self.samples:
            cols["lambda_ref"] = self.samples["lambda_ref"]
        phi = self.samples["phi"]
        for k, a in enumerate(self.area_ids):
            cols[f"phi_{a}"] = phi[:, k]
        cols["loglik"] = self.samples["loglik"]
        return cols


class FitError(RuntimeError):
    pass


def _exposure_arrays(exposures: ExposureSet):
    muhat = exposures.weighted_means()
    return muhat, exposures.w - np.repeat(muhat, exposures.sizes), exposures.p, exposures.ptr


def _link_slope(exposures: ExposureSet, link: str, alpha: float) -> np.ndarray:
    """d(log link)/d(alpha) per area at ``alpha``."""
    if link == "ecological":
        return exposures.weighted_means()
    with np.errstate(divide="ignore"):
        a = np.log(exposures.p) + exposures.w * alpha
    m = np.repeat(np.maximum.reduceat(a, exposures.ptr[:-1]), exposures.sizes)
    t = np.exp(a - m)
    return np.add.reduceat(t * exposures.w, exposures.ptr[:-1]) / np.add.reduceat(t, exposures.ptr[:-1])


@dataclass
class _Setup:
    """Initial state and fixed proposal geometry shared by every chain."""

    beta: np.ndarray
    alpha: float
    beta_chol: np.ndarray
    alpha_sd: float
    shear: float
    log_ratio: np.ndarray
    tau2: float
    hh_basis: np.ndarray
    gamma_chol: np.ndarray


def _prepare(data: HealthDataset, exposures: ExposureSet, spec: ModelSpec, hh_basis=None) -> _Setup:
    muhat = exposures.weighted_means()
    design = np.column_stack([data.x, muhat])
    try:
        coef, cov, fitted, _ = poisson_irls(data.y, np.log(data.e), design)
        beta, alpha = coef[:-1], float(coef[-1])
    except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        log.warning("GLM initialisation failed (%s); starting from the null model", exc)
        beta = np.zeros(data.p)
        beta[0] = math.log(data.y.sum() / data.e.sum()) if data.y.sum() > 0 else 0.0
        alpha = 0.0
        fitted = data.e * np.exp(beta[0])
    weights = np.maximum(fitted, 1e-8)
    xtwx = data.x.T @ (data.x * weights[:, None])
    beta_chol = np.linalg.cholesky(np.linalg.inv(xtwx) * 2.38**2 / data.p)
    slope = _link_slope(exposures, spec.link, alpha)
    shear = float(np.sum(data.y * slope) / max(data.y.sum(), 1e-12))
    resid_info = float(np.sum(weights * (slope - shear) ** 2))
    alpha_sd = 2.38 / math.sqrt(resid_info) if resid_info > 0 else 0.1
    log_ratio = np.log((data.y + 0.01) / fitted)
    tau2 = max(float(np.var(log_ratio) - np.mean(1.0 / (data.y + 1.0))), 0.01)

    if hh_basis is None:
        hh_basis = np.zeros((data.n, 0))
    q = hh_basis.shape[1]
    if q:
        prec = hh_basis.T @ (hh_basis * (data.y + 1.0)[:, None]) + np.eye(q) / 1e3
        gamma_chol = np.linalg.cholesky(np.linalg.inv(prec) * 2.38**2 / q)
    else:
        gamma_chol = np.zeros((0, 0))
    return _Setup(beta, alpha, beta_chol, alpha_sd, shear, log_ratio, tau2, hh_basis, gamma_chol)


def run_chain(
    data: HealthDataset,
    exposures: ExposureSet,
    graph: AreaGraph | None,
    spec: ModelSpec,
    config: FitConfig,
    chain_id: int = 0,
    hh_basis: np.ndarray | None = None,
    _setup: _Setup | None = None,
) -> ChainTrace:
    """Run one Markov chain; deterministic given ``(config.seed, chain_id)``."""
    n = data.n
    if exposures.n != n:
        raise ValueError("exposures and health data cover different numbers of areas")
    resid = RESIDUALS[spec.residual]
    if resid in (K.RESID_CAR, K.RESID_LOCAL):
        if graph is None:
            raise ValueError(f"residual model {spec.residual!r} needs an adjacency graph")
        if graph.n != n:
            raise ValueError("graph and health data cover different numbers of areas")
    if resid == K.RESID_HH and hh_basis is None:
        raise ValueError("the orthogonal-basis model needs a basis matrix; use comparators.fit_hh")
    setup = _setup or _prepare(data, exposures, spec, hh_basis)

    # --- state ---
    beta = setup.beta.copy()
    scal = np.array([setup.alpha, setup.tau2, 0.5, 1.0])
    theta = np.zeros(n)
    G = spec.G if resid == K.RESID_LOCAL else 1
    if resid == K.RESID_LOCAL:
        cs = initial_cluster_state(setup.log_ratio, G)
        lam, alloc = cs.lam.copy(), cs.z - 1
        # start theta tight so the intercepts, not theta, pick up the steps
        resid_var = np.var(setup.log_ratio - lam[alloc]) - np.mean(1.0 / (data.y + 1.0))
        scal[1] = max(float(resid_var), 1e-3)
    else:
        lam, alloc = np.zeros(1), np.zeros(n, dtype=np.int64)
    basis = setup.hh_basis if resid == K.RESID_HH else np.zeros((n, 0))
    q = basis.shape[1]
    gamma = np.zeros(q)
    phi = lam[alloc] + theta if resid == K.RESID_LOCAL else np.zeros(n)

    muhat, cell_dev, cell_p, cell_ptr = _exposure_arrays(exposures)
    cell_span = float(np.max(np.abs(cell_dev), initial=0.0))
    link_kind = 0 if spec.link == "ecological" else 1
    link = np.empty(n)
    K.log_links(link_kind, scal[0], muhat, cell_dev, cell_span, cell_p, cell_ptr, link,
                np.empty(cell_dev.size), np.empty(cell_dev.size, np.int64))
    loge = np.log(data.e)
    xb = data.x @ beta
    with np.errstate(over="ignore"):
        mu = np.exp(loge + xb + phi + link)
        _check_initial(data, loge, xb, phi, link, beta, scal)

    if graph is not None:
        indptr, indices = graph.csr
        edges, lap_eig = graph.edge_array, graph.laplacian_eigenvalues
    else:
        indptr, indices = np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)
        edges, lap_eig = np.zeros((0, 2), dtype=np.int64), np.zeros(n)
    priors = np.array([config.beta_prior_var, config.alpha_prior_var, config.tau2_a,
                       config.tau2_b, config.delta_max, config.gamma_prior_var])

    scales = np.ones(K.N_BLOCKS)
    for name, b in _BLOCK.items():
        scales[b] = config.proposal_scales.get(name, DEFAULT_SCALES[name])
    scales[K.ALPHA] *= setup.alpha_sd

    active = np.ones(K.N_BLOCKS, dtype=np.int64)
    for name in config.fixed_blocks:
        active[_ALL_BLOCKS[name]] = 0
    shear = setup.shear if active[K.BETA] else 0.0
    lik_w = 1.0 if config.likelihood else 0.0

    has_theta = resid in (K.RESID_CAR, K.RESID_LOCAL)
    has_local = resid == K.RESID_LOCAL
    streams = {b: rng_stream(config.seed, chain_id, b) for b in range(K.N_BLOCKS)}
    p = data.p
    tau_shape = config.tau2_a + 0.5 * n

    n_keep = config.n_keep
    out_beta = np.empty((n_keep, p))
    out_scal = np.empty((n_keep, 5))
    out_lam = np.empty((n_keep, G))
    out_phi = np.empty((n_keep, n))
    out_ll = np.empty(n_keep)
    out_pos = np.zeros(1, dtype=np.int64)
    acc_total = np.zeros(K.N_BLOCKS, dtype=np.int64)
    tries_total = np.zeros(K.N_BLOCKS, dtype=np.int64)

    def tape(block, shape, kind="normal", active=True):
        if not active:
            return np.empty(shape[:1] + (0,) * (len(shape) - 1))
        g = streams[block]
        if kind == "normal":
            return g.standard_normal(shape)
        if kind == "uniform":
            return g.random(shape)
        return g.standard_gamma(tau_shape, shape)

    warm_end = int(config.theta_warmup * config.burn_in) if has_local else 0
    it0 = 0
    while it0 < config.n_iterations:
        B = min(config.adapt_every, config.n_iterations - it0)
        if it0 < warm_end:
            B = min(B, warm_end - it0)
        act = active.copy()
        if it0 < warm_end:
            act[[K.THETA, K.TAU2, K.RHO]] = 0
        zb, ub = tape(K.BETA, (B, p)), tape(K.BETA, (B,), "uniform")
        za, ua = tape(K.ALPHA, (B,)), tape(K.ALPHA, (B,), "uniform")
        zt, ut = tape(K.THETA, (B, n), active=has_theta), tape(K.THETA, (B, n), "uniform", has_theta)
        gt = tape(K.TAU2, (B,), "gamma", has_theta)
        zr, ur = tape(K.RHO, (B,), active=has_theta), tape(K.RHO, (B,), "uniform", has_theta)
        zl, ul = tape(K.LAMBDA, (B, G), active=has_local), tape(K.LAMBDA, (B, G), "uniform", has_local)
        uz = tape(K.ALLOC, (B, n), "uniform", has_local)
        zd, ud = tape(K.DELTA, (B,), active=has_local), tape(K.DELTA, (B,), "uniform", has_local)
        zg, ug = tape(K.GAMMA, (B, q), active=q > 0), tape(K.GAMMA, (B,), "uniform", q > 0)
        its = np.arange(it0, it0 + B)
        keep = (its >= config.burn_in) & ((its - config.burn_in + 1) % config.thin == 0)
        keep &= np.cumsum(keep) + out_pos[0] <= n_keep
        acc = np.zeros(K.N_BLOCKS, dtype=np.int64)
        tries = np.zeros(K.N_BLOCKS, dtype=np.int64)
        try:
            K.run_batch(
                B, resid, data.y, loge, data.x, link_kind, muhat, cell_dev, cell_span, cell_p, cell_ptr,
                indptr, indices, edges, lap_eig, basis, priors,
                beta, scal, theta, lam, alloc, gamma, xb, link, phi, mu,
                scales, setup.beta_chol, setup.gamma_chol, shear, act, lik_w,
                zb, ub, za, ua, zt, ut, gt, zr, ur, zl, ul, uz, zd, ud, zg, ug,
                acc, tries, keep, out_beta, out_scal, out_lam, out_phi, out_ll, out_pos,
            )
        except FloatingPointError as exc:
            raise FitError(f"chain {chain_id} failed at iteration {it0}: {exc}") from exc
        if it0 + B <= config.burn_in:
            _adapt(scales, acc, tries)
        else:
            acc_total += acc
            tries_total += tries
        it0 += B

    if not np.all(np.isfinite(out_scal[:, 0])):
        raise FitError(f"chain {chain_id} produced non-finite exposure effects")
    kept = np.arange(config.n_iterations)
    kept = kept[(kept >= config.burn_in) & ((kept - config.burn_in + 1) % config.thin == 0)][:n_keep]
    samples = {
        "beta": out_beta,
        "alpha": out_scal[:, 0].copy(),
        "phi": out_phi,
        "loglik": out_ll - float(np.sum(gammaln(data.y + 1.0))),
    }
    if has_theta:
        samples["tau2"] = out_scal[:, 1].copy()
        samples["rho"] = out_scal[:, 2].copy()
    if has_local:
        samples["delta"] = out_scal[:, 3].copy()
        samples["lambda"] = out_lam
        samples["lambda_ref"] = out_scal[:, 4].copy()
    acceptance = {}
    for name, b in _BLOCK.items():
        if tries_total[b]:
            acceptance[name] = float(acc_total[b] / tries_total[b])
    final_scales = {name: float(scales[b]) for name, b in _BLOCK.items()}
    return ChainTrace(chain_id, kept, samples, acceptance, data.covariate_names, data.area_ids, final_scales)


def _adapt(scales, acc, tries):
    for name, b in _BLOCK.items():
        if tries[b] == 0:
            continue
        rate = acc[b] / tries[b]
        lo, hi = _SCALE_BOUNDS.get(name, (1e-6, 1e3))
        scales[b] = min(max(scales[b] * math.exp(3.0 * (rate - _TARGET[name])), lo), hi)


def _check_initial(data, loge, xb, phi, link, beta, scal):
    parts = {
        "beta": xb,
        "alpha (exposure link)": link,
        "random effects": phi,
    }
    for name, arr in parts.items():
        if not np.all(np.isfinite(arr)):
            raise FitError(f"non-finite log-posterior at initialisation: {name}")
    eta = loge + xb + phi + link
    ll = np.sum(data.y * eta - np.exp(eta))
    if not np.isfinite(ll):
        raise FitError("non-finite log-posterior at initialisation: likelihood")
    if not np.isfinite(scal[0]) or not np.all(np.isfinite(beta)):
        raise FitError("non-finite log-posterior at initialisation: regression coefficients")


def _worker_count(config: FitConfig) -> int:
    if config.workers is not None:
        return max(1, config.workers)
    env = os.environ.get("SRE_THREADS")
    if env:
        return max(1, int(env))
    return 1


def _chain_job(args):
    return run_chain(*args)


def run_chains(
    data: HealthDataset,
    exposures: ExposureSet,
    graph: AreaGraph | None,
    spec: ModelSpec,
    config: FitConfig,
    hh_basis: np.ndarray | None = None,
) -> list[ChainTrace]:
    """Run ``config.n_chains`` chains (ids ``0..n_chains-1``), in parallel if workers allow.

    The result does not depend on the number of workers.
    """
    setup = _prepare(data, exposures, spec, hh_basis)
    jobs = [(data, exposures, graph, spec, config, c, hh_basis, setup) for c in range(config.n_chains)]
    workers = min(_worker_count(config), config.n_chains)
    if workers == 1:
        return [_chain_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_chain_job, jobs))


# ----------------------------------------------------------------------------
# diagnostics and summaries


def _autocorr(x: np.ndarray) -> np.ndarray:
    n = x.size
    x = x - x.mean()
    f = np.fft.rfft(x, n=2 * n)
    acov = np.fft.irfft(f * np.conj(f))[:n] / n
    if acov[0] <= 0:
        return np.ones(1)
    return acov / acov[0]


def effective_sample_size(chain: np.ndarray) -> float:
    """ESS of one chain with Geyer's initial positive sequence truncation."""
    chain = np.asarray(chain, dtype=float)
    n = chain.size
    if n < 4 or np.ptp(chain) == 0:
        return float(n)
    rho = _autocorr(chain)
    tau = -1.0
    for m in range(0, (n - 1) // 2):
        pair = rho[2 * m] + rho[2 * m + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    return float(n / max(tau, 1e-12))


def split_psrf(chains: Sequence[np.ndarray]) -> float:
    """Split-chain potential scale reduction factor; NaN for a single chain."""
    if len(chains) < 2:
        return float("nan")
    n = min(len(c) for c in chains) // 2
    if n < 2:
        return float("nan")
    halves = []
    for c in chains:
        c = np.asarray(c, dtype=float)
        halves += [c[:n], c[n : 2 * n]]
    x = np.stack(halves)
    w = np.mean(np.var(x, axis=1, ddof=1))
    b = n * np.var(np.mean(x, axis=1), ddof=1)
    if w == 0:
        return 1.0 if b == 0 else float("inf")
    var_plus = (n - 1) / n * w + b / n
    # values below 1 only reflect the finite-n factor
    return float(max(1.0, np.sqrt(var_plus / w)))


def diagnostics(traces: Sequence[ChainTrace]) -> tuple[dict[str, float], dict[str, float]]:
    """(ESS, PSRF) for every scalar parameter; PSRF is NaN with one chain."""
    if not traces:
        raise ValueError("no traces")
    per_chain = [t.scalar_columns() for t in traces]
    ess, psrf = {}, {}
    for name in per_chain[0]:
        chains = [c[name] for c in per_chain]
        ess[name] = float(sum(effective_sample_size(c) for c in chains))
        psrf[name] = split_psrf(chains)
    return ess, psrf


@dataclass
class PosteriorSummary:
    parameters: dict[str, dict[str, float]]
    relative_risk: dict[str, float]
    n_samples: int
    n_chains: int
    acceptance: dict[str, float]

    def alpha_interval(self) -> tuple[float, float, float]:
        a = self.parameters["alpha"]
        return a["mean"], a["lo95"], a["hi95"]

    def to_dict(self) -> dict:
        return {
            "parameters": self.parameters,
            "relative_risk": self.relative_risk,
            "n_samples": self.n_samples,
            "n_chains": self.n_chains,
            "acceptance": self.acceptance,
        }


def summarize(traces: Sequence[ChainTrace], spec: ModelSpec) -> PosteriorSummary:
    """Pooled posterior means, 95% intervals, ESS and PSRF, plus the relative risk
    ``exp(alpha * increment)`` summarised draw by draw."""
    if not traces or any(len(t) == 0 for t in traces):
        raise ValueError("summaries need non-empty traces")
    ess, psrf = diagnostics(traces)
    pooled = {}
    for t in traces:
        for name, col in t.scalar_columns().items():
            pooled.setdefault(name, []).append(col)
    params = {}
    for name, cols in pooled.items():
        x = np.concatenate(cols)
        lo, hi = np.quantile(x, [0.025, 0.975])
        params[name] = {
            "mean": float(x.mean()),
            "sd": float(x.std(ddof=1)) if x.size > 1 else 0.0,
            "lo95": float(lo),
            "hi95": float(hi),
            "ess": ess[name],
            "psrf": psrf[name],
        }
    rr = np.exp(np.concatenate(pooled["alpha"]) * spec.increment)
    lo, hi = np.quantile(rr, [0.025, 0.975])
    relative_risk = {"increment": spec.increment, "mean": float(rr.mean()), "lo95": float(lo), "hi95": float(hi)}
    acceptance = {}
    for t in traces:
        for k, v in t.acceptance.items():
            acceptance.setdefault(k, []).append(v)
    acceptance = {k: float(np.mean(v)) for k, v in acceptance.items()}
    return PosteriorSummary(params, relative_risk, sum(len(t) for t in traces), len(traces), acceptance)


def fit(data, exposures, graph, spec: ModelSpec, config: FitConfig, hh_basis=None):
    """Run all chains and summarise them."""
    traces = run_chains(data, exposures, graph, spec, config, hh_basis)
    return traces, summarize(traces, spec)


def posterior_alpha(traces: Sequence[ChainTrace]) -> tuple[float, float, float, float]:
    """(mean, sd, lo95, hi95) of the pooled exposure effect."""
    a = np.concatenate([t.samples["alpha"] for t in traces])
    lo, hi = np.quantile(a, [0.025, 0.975])
    return float(a.mean()), float(a.std(ddof=1)), float(lo), float(hi)
