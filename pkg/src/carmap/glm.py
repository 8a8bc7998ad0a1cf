"""Quasi-Poisson log-linear regression fitted by iteratively reweighted least squares."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import HealthDataset

Z95 = 1.959963984540054


class RankDeficientError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class GlmFit:
    names: tuple[str, ...]
    coef: np.ndarray
    se: np.ndarray
    dispersion: float
    cov_unscaled: np.ndarray
    fitted: np.ndarray
    n_iter: int

    @property
    def ci_low(self) -> np.ndarray:
        return self.coef - Z95 * self.se

    @property
    def ci_high(self) -> np.ndarray:
        return self.coef + Z95 * self.se

    def __getitem__(self, name: str) -> tuple[float, float, float]:
        """(estimate, lower 95%, upper 95%) for one coefficient."""
        j = self.names.index(name)
        return float(self.coef[j]), float(self.ci_low[j]), float(self.ci_high[j])


def poisson_irls(y, offset, design, max_iter: int = 100, tol: float = 1e-10):
    """Poisson MLE with log link and fixed offset.

    Returns ``(coef, cov_unscaled, fitted_mean, n_iter)`` where
    ``cov_unscaled = (X' W X)^-1`` at convergence.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(design, dtype=float)
    offset = np.asarray(offset, dtype=float)
    n, p = X.shape
    if np.linalg.matrix_rank(X) < p:
        raise RankDeficientError(f"design matrix has rank < {p} columns")
    eta = np.log(y + 0.5)
    coef = np.zeros(p)
    dev_old = np.inf
    for it in range(1, max_iter + 1):
        mu = np.exp(eta)
        z = eta - offset + (y - mu) / mu
        sw = np.sqrt(mu)
        coef, *_ = np.linalg.lstsq(X * sw[:, None], z * sw, rcond=None)
        eta = offset + X @ coef
        mu = np.exp(eta)
        with np.errstate(divide="ignore", invalid="ignore"):
            dev = 2.0 * np.sum(np.where(y > 0, y * np.log(y / mu), 0.0) - (y - mu))
        if abs(dev - dev_old) <= tol * (abs(dev) + 0.1):
            break
        dev_old = dev
    else:
        raise ConvergenceError(f"IRLS did not converge in {max_iter} iterations")
    mu = np.exp(offset + X @ coef)
    info = X.T @ (X * mu[:, None])
    return coef, np.linalg.inv(info), mu, it


def fit_glm(data: HealthDataset, exposure_mean=None, max_iter: int = 100) -> GlmFit:
    """Overdispersed Poisson regression of ``y`` on ``[x | exposure_mean]`` with offset log E.

    The dispersion is the Pearson statistic over the residual degrees of
    freedom and the standard errors are inflated by its square root.
    """
    X = data.x
    names = data.covariate_names
    if exposure_mean is not None:
        X = np.column_stack([X, np.asarray(exposure_mean, dtype=float)])
        names = names + ("alpha",)
    n, p = X.shape
    if n <= p:
        raise RankDeficientError("more coefficients than areas")
    coef, cov, mu, n_iter = poisson_irls(data.y, np.log(data.e), X, max_iter=max_iter)
    dispersion = float(np.sum((data.y - mu) ** 2 / mu) / (n - p))
    se = np.sqrt(np.diag(cov) * dispersion)
    return GlmFit(tuple(names), coef, se, dispersion, cov, mu, n_iter)
