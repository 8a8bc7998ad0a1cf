"""Dense linear algebra and random-stream helpers shared by the samplers."""

from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike
from scipy.spatial.distance import cdist

SYMMETRY_RTOL = 1e-12


class DecompositionError(np.linalg.LinAlgError):
    """Raised when a matrix that should be positive definite is not."""


def rng_stream(seed: int, *stream: int) -> np.random.Generator:
    """Return an independent generator keyed by ``(seed, *stream)``.

    Streams are derived with :class:`numpy.random.SeedSequence` spawn keys, so
    the same key always reproduces the same draws and distinct keys never
    overlap in practice. This is how each chain, replicate and sampler block
    gets its own stream.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.PCG64(ss))


def as_symmetric(m: ArrayLike) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    scale = max(np.max(np.abs(m)), 1.0) if m.size else 1.0
    if np.max(np.abs(m - m.T), initial=0.0) > SYMMETRY_RTOL * scale:
        raise ValueError("matrix is not symmetric")
    return m


def cholesky(m: ArrayLike) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == m``.

    Raises :class:`DecompositionError` if ``m`` is not positive definite.
    """
    m = as_symmetric(m)
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError(f"matrix is not positive definite: {exc}") from None


def log_det_cholesky(m: ArrayLike) -> float:
    """log|m| for a symmetric positive definite matrix."""
    chol = cholesky(m)
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def sym_eigen(m: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix, eigenvalues descending.

    Returns ``(values, vectors)`` where ``vectors[:, j]`` pairs with
    ``values[j]`` and the columns are orthonormal.
    """
    m = as_symmetric(m)
    values, vectors = np.linalg.eigh(m)
    order = np.argsort(values)[::-1]
    return values[order], vectors[:, order]


def matern52(d: ArrayLike, variance: float, length: float) -> np.ndarray:
    """Closed-form Matérn covariance with smoothness 5/2 at distances ``d``."""
    if variance <= 0 or length <= 0:
        raise ValueError("variance and range must be positive")
    r = np.sqrt(5.0) * np.asarray(d, dtype=float) / length
    return variance * (1.0 + r + r * r / 3.0) * np.exp(-r)


def matern_covariance(
    coords: ArrayLike, variance: float, length: float, smoothness: float = 2.5
) -> np.ndarray:
    """Matérn covariance matrix between planar points.

    Only ``smoothness == 2.5`` is supported.
    """
    if smoothness != 2.5:
        raise NotImplementedError("only Matérn smoothness 2.5 is implemented")
    coords = np.asarray(coords, dtype=float)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ValueError("coords must have shape (n, 2)")
    cov = matern52(cdist(coords, coords), variance, length)
    # exact symmetry for downstream checks
    return 0.5 * (cov + cov.T)


def jittered_cholesky(cov: ArrayLike, jitter: float = 1e-8) -> np.ndarray:
    """Cholesky factor after adding ``jitter * mean(diag)`` to the diagonal."""
    cov = np.array(cov, dtype=float)
    cov[np.diag_indices_from(cov)] += jitter * float(np.mean(np.diag(cov)))
    return cholesky(cov)


def sample_mvn(mean: ArrayLike, chol_lower: ArrayLike, rng: np.random.Generator) -> np.ndarray:
    """Draw ``mean + L z`` with ``z`` standard normal from ``rng``."""
    mean = np.asarray(mean, dtype=float)
    chol_lower = np.asarray(chol_lower, dtype=float)
    if chol_lower.shape != (mean.size, mean.size):
        raise ValueError(
            f"factor shape {chol_lower.shape} does not match mean of length {mean.size}"
        )
    z = rng.standard_normal(mean.size)
    return mean + chol_lower @ z
