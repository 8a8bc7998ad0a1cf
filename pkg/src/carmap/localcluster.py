"""Piecewise-constant intercept surface: ordered levels, allocations and penalty."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K

DELTA_MAX = 100.0


@dataclass
class ClusterState:
    """Intercepts ``lam`` (strictly increasing), allocations ``z`` in 1..G, penalty ``delta``."""

    lam: np.ndarray
    z: np.ndarray
    delta: float
    delta_max: float = DELTA_MAX

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float)
        self.z = np.asarray(self.z, dtype=np.int64)
        if self.lam.ndim != 1 or self.lam.size < 1:
            raise ValueError("need at least one intercept")
        if np.any(np.diff(self.lam) <= 0):
            raise ValueError("intercepts must be strictly increasing")
        if np.any(self.z < 1) or np.any(self.z > self.G):
            raise ValueError(f"allocations must lie in 1..{self.G}")
        if not 0.0 <= self.delta <= self.delta_max:
            raise ValueError(f"delta must lie in [0, {self.delta_max}]")

    @property
    def G(self) -> int:
        return self.lam.size

    def phi(self, theta) -> np.ndarray:
        """Random effects lam[z_k] + theta_k."""
        return self.lam[self.z - 1] + np.asarray(theta, dtype=float)


def allocation_prior(z: int, delta: float, G: int) -> float:
    """Prior mass of class ``z`` (1-based) under the quadratic penalty towards (G+1)/2."""
    if not 1 <= z <= G:
        raise ValueError(f"class {z} outside 1..{G}")
    if delta < 0:
        raise ValueError("delta must be non-negative")
    return float(np.exp(K.allocation_log_prior(float(delta), int(G))[z - 1]))


def allocation_probabilities(state: ClusterState, loglik_by_class) -> np.ndarray:
    """Normalised full-conditional probabilities of one allocation."""
    logw = np.asarray(loglik_by_class, dtype=float) + K.allocation_log_prior(state.delta, state.G)
    m = np.max(logw)
    w = np.exp(logw - m)
    return w / w.sum()


def sample_allocation(k: int, state: ClusterState, loglik_by_class, rng: np.random.Generator) -> int:
    """Gibbs draw of allocation ``z_k`` (returned 1-based).

    ``loglik_by_class[g]`` is area ``k``'s Poisson log-likelihood with intercept ``lam[g]``.
    """
    if not 0 <= k < state.z.size:
        raise IndexError(k)
    logw = np.asarray(loglik_by_class, dtype=float)
    if logw.shape != (state.G,):
        raise ValueError(f"need {state.G} class log-likelihoods")
    logw = logw + K.allocation_log_prior(state.delta, state.G)
    g = K.draw_allocation(logw, rng.random())
    if g < 0:
        raise FloatingPointError(f"every class probability of area {k} is zero")
    return g + 1


def class_sufficient_stats(i: int, state: ClusterState, y, e, offset) -> tuple[float, float]:
    """Summed counts and summed ``E_k exp(offset_k)`` of the areas in class ``i``."""
    members = state.z == i
    y = np.asarray(y, dtype=float)
    mean_base = np.asarray(e, dtype=float) * np.exp(np.asarray(offset, dtype=float))
    return float(y[members].sum()), float(mean_base[members].sum())


def sample_lambda(
    i: int, state: ClusterState, y, e, offset, rng: np.random.Generator, step: float = 0.1
) -> float:
    """Metropolis update of intercept ``i`` (1-based), kept between its neighbours.

    ``offset_k`` is area k's log relative risk without its intercept, so class
    ``i``'s likelihood is ``prod Poisson(y_k | e_k exp(offset_k + lam_i))`` over
    areas with ``z_k == i``. The flat prior on the ordered intercepts means an
    empty class moves freely inside its bounds.
    """
    if not 1 <= i <= state.G:
        raise ValueError(f"class {i} outside 1..{state.G}")
    y_class, s_class = class_sufficient_stats(i, state, y, e, offset)
    new, _ = K.lambda_step(
        i - 1, state.lam, y_class, s_class, step, rng.standard_normal(), rng.random()
    )
    return float(new)


def delta_log_posterior(delta: float, state: ClusterState) -> float:
    """Unnormalised log posterior of delta under its uniform prior."""
    if not 0.0 <= delta <= state.delta_max:
        return -np.inf
    return float(K.delta_log_target(float(delta), state.z - 1, state.G))


def sample_delta(state: ClusterState, rng: np.random.Generator, step: float = 5.0) -> float:
    new, _ = K.delta_step(
        float(state.delta), state.z - 1, state.G, state.delta_max, step,
        rng.standard_normal(), rng.random(),
    )
    return float(new)


def initial_cluster_state(log_ratio, G: int, delta: float = 1.0) -> ClusterState:
    """Intercepts at equally spaced quantiles of ``log_ratio``, areas at the nearest one."""
    log_ratio = np.asarray(log_ratio, dtype=float)
    lam = np.quantile(log_ratio, (np.arange(G) + 0.5) / G)
    # ties in the quantiles would break the strict ordering
    lam = lam + np.arange(G) * 1e-6
    z = np.argmin(np.abs(log_ratio[:, None] - lam[None, :]), axis=1) + 1
    return ClusterState(lam, z, delta)
