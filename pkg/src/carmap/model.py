"""Data containers, the Poisson log-linear likelihood and exposure links."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy.special import gammaln

Link = Literal["ecological", "aggregate"]
LINKS = ("ecological", "aggregate")
WEIGHT_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class HealthDataset:
    """Observed counts ``y``, expected counts ``e`` and design ``x`` per area.

    The first column of ``x`` must be the intercept (all ones).
    """

    area_ids: tuple[str, ...]
    y: np.ndarray
    e: np.ndarray
    x: np.ndarray
    covariate_names: tuple[str, ...] = ()

    def __post_init__(self):
        y = np.asarray(self.y)
        e = np.asarray(self.e, dtype=float)
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        n = len(self.area_ids)
        if y.shape != (n,) or e.shape != (n,) or x.shape[0] != n:
            raise ValueError("y, e and x must have one row per area")
        if np.any(y < 0) or np.any(y != np.round(y)):
            raise ValueError("observed counts must be non-negative integers")
        if np.any(~np.isfinite(e)) or np.any(e <= 0):
            raise ValueError("expected counts must be positive")
        if not np.all(x[:, 0] == 1.0):
            raise ValueError("first covariate column must be the intercept (all ones)")
        if not np.all(np.isfinite(x)):
            raise ValueError("covariates must be finite")
        if len(set(self.area_ids)) != n:
            raise ValueError("area ids must be unique")
        names = tuple(self.covariate_names) or ("intercept",) + tuple(
            f"x{j}" for j in range(1, x.shape[1])
        )
        if len(names) != x.shape[1]:
            raise ValueError("one covariate name per column of x")
        object.__setattr__(self, "y", y.astype(float))
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "covariate_names", names)
        object.__setattr__(self, "area_ids", tuple(str(a) for a in self.area_ids))

    @property
    def n(self) -> int:
        return len(self.area_ids)

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def smr(self) -> np.ndarray:
        return self.y / self.e

    @classmethod
    def from_arrays(cls, y, e, x=None, area_ids=None, covariate_names=()):
        y = np.asarray(y)
        n = y.size
        if x is None:
            x = np.ones((n, 1))
        if area_ids is None:
            area_ids = tuple(str(k) for k in range(n))
        return cls(tuple(area_ids), y, e, x, tuple(covariate_names))


@dataclass(frozen=True, eq=False)
class ExposureSet:
    """Within-area concentrations ``w`` and population weights ``p``.

    Stored flat: area ``k`` owns cells ``ptr[k]:ptr[k+1]``.
    """

    w: np.ndarray
    p: np.ndarray
    ptr: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        p = np.asarray(self.p, dtype=float)
        ptr = np.asarray(self.ptr, dtype=np.int64)
        if w.shape != p.shape or w.ndim != 1:
            raise ValueError("w and p must be flat arrays of equal length")
        if ptr[0] != 0 or ptr[-1] != w.size or np.any(np.diff(ptr) < 1):
            raise ValueError("every area needs at least one concentration")
        if np.any(p < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be non-negative and concentrations finite")
        sums = np.add.reduceat(p, ptr[:-1])
        if np.any(np.abs(sums - 1.0) > WEIGHT_TOL):
            raise ValueError("population weights must sum to 1 within every area")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "ptr", ptr)

    @classmethod
    def from_lists(cls, ws: Sequence[Sequence[float]], ps: Sequence[Sequence[float]] | None = None):
        if any(len(wk) == 0 for wk in ws):
            raise ValueError("every area needs at least one concentration")
        if ps is None:
            ps = [np.full(len(wk), 1.0 / len(wk)) for wk in ws]
        if len(ws) != len(ps):
            raise ValueError("need weights for every area")
        sizes = [len(wk) for wk in ws]
        if any(len(pk) != q for pk, q in zip(ps, sizes)):
            raise ValueError("w_k and p_k lengths differ")
        ptr = np.concatenate([[0], np.cumsum(sizes)])
        flat = lambda xs: np.concatenate([np.asarray(v, dtype=float) for v in xs])
        return cls(flat(ws), flat(ps), ptr)

    @classmethod
    def point(cls, values: Sequence[float]):
        """One concentration per area (no within-area variation)."""
        values = np.asarray(values, dtype=float)
        return cls(values, np.ones_like(values), np.arange(values.size + 1))

    @property
    def n(self) -> int:
        return self.ptr.size - 1

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.ptr)

    def area(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        s = slice(self.ptr[k], self.ptr[k + 1])
        return self.w[s], self.p[s]

    def weighted_means(self) -> np.ndarray:
        return np.add.reduceat(self.p * self.w, self.ptr[:-1])

    def log_aggregate_links(self, alpha: float) -> np.ndarray:
        with np.errstate(divide="ignore"):
            a = np.log(self.p) + self.w * alpha
        m = np.maximum.reduceat(a, self.ptr[:-1])
        return m + np.log(np.add.reduceat(np.exp(a - np.repeat(m, self.sizes)), self.ptr[:-1]))


@dataclass
class ModelParams:
    """Point in parameter space: covariate effects, exposure effect, random effects."""

    beta: np.ndarray
    alpha: float
    phi: np.ndarray
    link: Link = "ecological"

    def __post_init__(self):
        if self.link not in LINKS:
            raise ValueError(f"link must be one of {LINKS}, got {self.link!r}")
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        self.phi = np.atleast_1d(np.asarray(self.phi, dtype=float))


def _check_weights(w_k, p_k):
    w_k = np.atleast_1d(np.asarray(w_k, dtype=float))
    p_k = np.atleast_1d(np.asarray(p_k, dtype=float))
    if w_k.shape != p_k.shape or w_k.size == 0:
        raise ValueError("w_k and p_k must be non-empty and the same length")
    if np.any(p_k < 0) or abs(p_k.sum() - 1.0) > WEIGHT_TOL:
        raise ValueError("weights must be non-negative and sum to 1")
    return w_k, p_k


def weighted_mean_exposure(w_k, p_k) -> float:
    w_k, p_k = _check_weights(w_k, p_k)
    return float(p_k @ w_k)


def log_aggregate_link(w_k, p_k, alpha: float) -> float:
    """log of sum_i p_ki exp(w_ki alpha), evaluated with max-subtraction."""
    w_k, p_k = _check_weights(w_k, p_k)
    keep = p_k > 0
    a = w_k[keep] * alpha
    m = a.max()
    return float(m + np.log(np.sum(p_k[keep] * np.exp(a - m))))


def aggregate_link(w_k, p_k, alpha: float) -> float:
    """Population-weighted sample moment generating function of the exposure at ``alpha``."""
    return float(np.exp(log_aggregate_link(w_k, p_k, alpha)))


def log_link(w_k, p_k, alpha: float, link: Link) -> float:
    if link == "ecological":
        return weighted_mean_exposure(w_k, p_k) * alpha
    if link == "aggregate":
        return log_aggregate_link(w_k, p_k, alpha)
    raise ValueError(f"unknown link {link!r}")


def area_relative_risk(x_k, params: ModelParams, exposure_k, k: int) -> float:
    """Relative risk ``R_k`` of area ``k`` under ``params.link``.

    ``exposure_k`` is the ``(w_k, p_k)`` pair of that area.
    """
    w_k, p_k = exposure_k
    log_r = float(np.dot(x_k, params.beta)) + params.phi[k] + log_link(w_k, p_k, params.alpha, params.link)
    return float(np.exp(log_r))


def log_relative_risks(data: HealthDataset, exposures: ExposureSet, params: ModelParams) -> np.ndarray:
    if exposures.n != data.n or params.phi.size != data.n or params.beta.size != data.p:
        raise ValueError("parameter dimensions do not match the data")
    if params.link == "ecological":
        link = exposures.weighted_means() * params.alpha
    else:
        link = exposures.log_aggregate_links(params.alpha)
    return data.x @ params.beta + params.phi + link


def poisson_log_pmf(y, mean) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    mean = np.asarray(mean, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(y > 0, y * np.log(mean), 0.0)
    return term - mean - gammaln(y + 1.0)


def log_likelihood(data: HealthDataset, exposures: ExposureSet, params: ModelParams) -> float:
    """Poisson log-likelihood including the ``log y!`` constants."""
    mean = data.e * np.exp(log_relative_risks(data, exposures, params))
    return float(np.sum(poisson_log_pmf(data.y, mean)))


def relative_risk_for_increment(alpha: float, delta: float) -> float:
    return float(np.exp(alpha * delta))


def gaussian_bias_term(b: float, alpha: float) -> float:
    """Shift ``0.5 b alpha^2`` picked up by the ecological exposure effect when
    within-area concentrations are Gaussian with variance ``a + b * mean``."""
    return 0.5 * b * alpha * alpha
