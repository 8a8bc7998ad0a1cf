"""Leroux conditional autoregressive prior for the smooth random effects."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from . import _kernels as K
from .graph import AreaGraph
from .numerics import log_det_cholesky


@dataclass
class CarState:
    theta: np.ndarray
    rho: float
    tau2: float

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if not self.tau2 > 0.0:
            raise ValueError(f"tau2 must be positive, got {self.tau2}")


def leroux_precision(graph: AreaGraph, rho: float) -> np.ndarray:
    """Q(rho) = rho (D - W) + (1 - rho) I, the precision of theta up to 1/tau2."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    return rho * graph.laplacian() + (1.0 - rho) * np.eye(graph.n)


def quadratic_form(theta, graph: AreaGraph, rho: float) -> float:
    """theta' Q(rho) theta, computed edge-wise."""
    s_edge, s_sq = K.edge_sums(np.asarray(theta, dtype=float), graph.edge_array)
    return rho * s_edge + (1.0 - rho) * s_sq


def log_det_precision(graph: AreaGraph, rho: float, method: str = "eigen") -> float:
    """log|Q(rho)|.

    ``"eigen"`` reuses the cached Laplacian spectrum (O(n) per call, what the
    sampler uses); ``"cholesky"`` factorises Q(rho) directly.
    """
    if method == "eigen":
        return float(K.leroux_log_det(rho, graph.laplacian_eigenvalues))
    if method == "cholesky":
        return log_det_cholesky(leroux_precision(graph, rho))
    raise ValueError(f"unknown method {method!r}")


def full_conditional_theta(k: int, state: CarState, graph: AreaGraph) -> tuple[float, float]:
    """Mean and variance of theta_k given all other theta."""
    if state.rho == 1.0 and graph.degree[k] == 0:
        raise ValueError(f"conditional of isolated area {k} is improper at rho = 1")
    indptr, indices = graph.csr
    m, v = K.theta_conditional(k, state.theta, state.rho, state.tau2, indptr, indices)
    return float(m), float(v)


def partial_correlation(graph: AreaGraph, rho: float, k: int, i: int) -> float:
    if k == i:
        raise ValueError("partial correlation needs two distinct areas")
    w = 1.0 if i in set(graph.neighbours(k).tolist()) else 0.0
    dk, di = graph.degree[k], graph.degree[i]
    return rho * w / np.sqrt((rho * dk + 1.0 - rho) * (rho * di + 1.0 - rho))


def tau2_posterior_params(theta, rho: float, graph: AreaGraph, a: float, b: float) -> tuple[float, float]:
    """(shape, scale) of the inverse-gamma full conditional of tau2."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (graph.n,):
        raise ValueError(f"theta must have length {graph.n}")
    qf = quadratic_form(theta, graph, rho)
    if qf < 0:
        raise FloatingPointError(f"negative quadratic form {qf}")
    return a + 0.5 * graph.n, b + 0.5 * qf


def sample_tau2(theta, rho: float, graph: AreaGraph, a: float, b: float, rng: np.random.Generator) -> float:
    shape, scale = tau2_posterior_params(theta, rho, graph, a, b)
    return scale / rng.standard_gamma(shape)


def simulate_leroux(graph: AreaGraph, rho: float, tau2: float, rng: np.random.Generator) -> np.ndarray:
    """One draw of theta ~ N(0, tau2 Q(rho)^-1); needs rho < 1."""
    if not 0.0 <= rho < 1.0:
        raise ValueError("simulation needs rho in [0, 1)")
    chol = np.linalg.cholesky(leroux_precision(graph, rho) / tau2)
    z = rng.standard_normal(graph.n)
    # Q = L L' so theta = L'^{-1} z has covariance Q^{-1}
    return solve_triangular(chol.T, z, lower=False)
