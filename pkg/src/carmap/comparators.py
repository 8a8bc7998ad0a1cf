"""Comparison models: quasi-Poisson GLM and restricted spatial regression on an
orthogonal eigenvector basis."""

from __future__ import annotations

import numpy as np

from . import mcmc
from .glm import GlmFit, RankDeficientError, fit_glm
from .graph import AreaGraph
from .model import ExposureSet, HealthDataset
from .numerics import sym_eigen

__all__ = ["GlmFit", "fit_glm", "hh_basis", "hh_spectrum", "fit_hh", "canonical_signs"]


def canonical_signs(m: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Flip columns so the first entry with magnitude above ``tol`` is positive."""
    m = np.array(m, dtype=float)
    for j in range(m.shape[1]):
        nz = np.flatnonzero(np.abs(m[:, j]) > tol)
        if nz.size and m[nz[0], j] < 0:
            m[:, j] = -m[:, j]
    return m


def _check_design(X, graph: AreaGraph) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] != graph.n:
        raise ValueError("X and graph disagree on the number of areas")
    if np.linalg.matrix_rank(X.T @ X) < X.shape[1]:
        raise RankDeficientError("X'X is singular")
    return X


def _projected_adjacency(X, graph: AreaGraph) -> np.ndarray:
    X = _check_design(X, graph)
    P = np.eye(graph.n) - X @ np.linalg.solve(X.T @ X, X.T)
    pwp = P @ graph.adjacency() @ P
    return 0.5 * (pwp + pwp.T)


def hh_spectrum(X, graph: AreaGraph) -> tuple[np.ndarray, np.ndarray]:
    """All eigenpairs of P W P (descending), P the residual projection of X."""
    return sym_eigen(_projected_adjacency(X, graph))


def hh_basis(X, graph: AreaGraph, q: int) -> np.ndarray:
    """The ``q`` leading eigenvectors of P W P, signs canonicalised."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if q < 0 or q > graph.n - X.shape[1]:
        raise ValueError(f"q must lie in 0..{graph.n - X.shape[1]}")
    if q == 0:
        return np.zeros((graph.n, 0))
    _check_design(X, graph)
    # eigen-solve inside range(P) so tied zero eigenvalues cannot pull in X directions
    Q, _ = np.linalg.qr(X, mode="complete")
    U = Q[:, X.shape[1]:]
    inner = U.T @ graph.adjacency() @ U
    _, vecs = sym_eigen(0.5 * (inner + inner.T))
    return canonical_signs(U @ vecs[:, :q])


def fit_hh(
    data: HealthDataset,
    exposure_mean,
    graph: AreaGraph,
    q: int,
    config: mcmc.FitConfig,
    increment: float = 1.0,
) -> list[mcmc.ChainTrace]:
    """Bayesian Poisson fit with random effects ``phi = M gamma``.

    ``M`` spans the leading eigenvectors of P W P where P projects out both
    the covariates and the exposure, so the random effects cannot compete
    with any fixed effect. ``gamma`` has independent N(0, gamma_prior_var)
    priors.
    """
    exposure_mean = np.asarray(exposure_mean, dtype=float)
    basis = hh_basis(np.column_stack([data.x, exposure_mean]), graph, q)
    spec = mcmc.ModelSpec("hh", "ecological", increment=increment, hh_q=q)
    return mcmc.run_chains(data, ExposureSet.point(exposure_mean), graph, spec, config, hh_basis=basis)
