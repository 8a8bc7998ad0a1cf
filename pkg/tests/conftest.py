import numpy as np
import pytest

from carmap.graph import from_adjacency_list


def random_graph(rng, n_min=2, n_max=15, p_edge=None):
    n = int(rng.integers(n_min, n_max + 1))
    p = p_edge if p_edge is not None else rng.uniform(0.1, 0.6)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    return from_adjacency_list(pairs, n=n)


def grid_cdf(log_density, grid):
    """Normalised CDF of an unnormalised log density tabulated on ``grid`` (trapezoid rule)."""
    logd = log_density(grid)
    d = np.exp(logd - logd.max())
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (d[1:] + d[:-1]) * np.diff(grid))])
    return cdf / cdf[-1]


def ks_against_grid(samples, grid, cdf):
    x = np.sort(np.asarray(samples))
    emp_hi = np.arange(1, x.size + 1) / x.size
    emp_lo = np.arange(0, x.size) / x.size
    f = np.interp(x, grid, cdf)
    return float(max(np.max(emp_hi - f), np.max(f - emp_lo)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
