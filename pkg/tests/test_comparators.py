import math

import numpy as np
import pytest
import statsmodels.api as sm
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from carmap import comparators, mcmc
from carmap.glm import ConvergenceError, RankDeficientError, Z95
from carmap.graph import from_adjacency_list, lattice_graph
from carmap.model import ExposureSet, HealthDataset

from conftest import random_graph

CYCLE4 = from_adjacency_list([(0, 1), (1, 2), (2, 3), (3, 0)], n=4)


def poisson_data(seed, n=200, beta=(0.1, -0.3), alpha=0.05, scale=100.0):
    gen = np.random.default_rng(seed)
    x = np.column_stack([np.ones(n), gen.normal(size=n)])
    mu = gen.uniform(10, 30, n)
    e = gen.uniform(0.7, 1.3, n) * scale
    y = gen.poisson(e * np.exp(x @ np.asarray(beta) + alpha * mu))
    return HealthDataset.from_arrays(y, e, x, covariate_names=("intercept", "z")), mu


@pytest.mark.parametrize("seed", range(4))
def test_glm_matches_statsmodels(seed):
    data, mu = poisson_data(seed)
    fit = comparators.fit_glm(data, mu)
    X = np.column_stack([data.x, mu])
    ref = sm.GLM(data.y, X, family=sm.families.Poisson(), offset=np.log(data.e)).fit(scale="X2")
    assert_allclose(fit.coef, ref.params, rtol=1e-8, atol=1e-10)
    assert_allclose(fit.se, ref.bse, rtol=1e-6)
    assert fit.dispersion == pytest.approx(ref.scale, rel=1e-8)
    assert fit.names == ("intercept", "z", "alpha")


@pytest.mark.parametrize("seed", range(3))
def test_intercept_only_closed_form(seed):
    gen = np.random.default_rng(seed)
    e = gen.uniform(1, 50, 40)
    y = gen.poisson(e * 1.7)
    fit = comparators.fit_glm(HealthDataset.from_arrays(y, e))
    assert fit.coef[0] == pytest.approx(math.log(y.sum() / e.sum()), abs=1e-10)


def test_interval_is_estimate_plus_minus_se():
    data, mu = poisson_data(5)
    fit = comparators.fit_glm(data, mu)
    assert_allclose(fit.ci_low, fit.coef - Z95 * fit.se)
    assert_allclose(fit.ci_high, fit.coef + Z95 * fit.se)
    est, lo, hi = fit["alpha"]
    assert lo < est < hi
    assert fit.dispersion >= 0


@pytest.mark.parametrize("seed", range(3))
def test_dispersion_near_one_at_large_counts(seed):
    data, mu = poisson_data(seed, n=2000, scale=1000.0)
    assert comparators.fit_glm(data, mu).dispersion == pytest.approx(1.0, rel=0.1)


def test_consistency_at_huge_counts():
    data, mu = poisson_data(9, n=400, scale=2500.0)
    assert data.y.sum() > 1e6
    fit = comparators.fit_glm(data, mu)
    assert_allclose(fit.coef, [0.1, -0.3, 0.05], atol=5 * fit.se.max())
    assert fit.se.max() < 0.01


def test_duplicate_column_rank_error():
    data, mu = poisson_data(1)
    dup = HealthDataset.from_arrays(data.y, data.e, np.column_stack([data.x, data.x[:, 1]]),
                                    covariate_names=("intercept", "z", "z2"))
    with pytest.raises(RankDeficientError):
        comparators.fit_glm(dup, mu)
    with pytest.raises(RankDeficientError):
        comparators.fit_glm(data, np.full(data.n, 3.0))


def test_non_convergence_reported():
    data, mu = poisson_data(2)
    with pytest.raises(ConvergenceError):
        comparators.fit_glm(data, mu, max_iter=1)


def test_hh_cycle_eigenvalues_match_dense():
    X = np.ones((4, 1))
    vals, _ = comparators.hh_spectrum(X, CYCLE4)
    P = np.eye(4) - np.full((4, 4), 0.25)
    ref = np.sort(np.linalg.eigvalsh(P @ CYCLE4.adjacency() @ P))[::-1]
    assert_allclose(vals, ref, atol=1e-12)
    assert_allclose(vals, [0.0, 0.0, 0.0, -2.0], atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), q_frac=st.floats(0.0, 1.0))
def test_hh_basis_properties(seed, q_frac):
    # q may reach n - p, where zero eigenvalues tie with the X directions
    gen = np.random.default_rng(seed)
    g = random_graph(gen, 5, 25)
    X = np.column_stack([np.ones(g.n), gen.normal(size=g.n)])
    q = int(round(q_frac * (g.n - 2)))
    M = comparators.hh_basis(X, g, q)
    assert M.shape == (g.n, q)
    assert np.abs(X.T @ M).max(initial=0.0) < 1e-8
    assert_allclose(M.T @ M, np.eye(q), atol=1e-10)
    vals, _ = comparators.hh_spectrum(X, g)
    assert np.all(np.isreal(vals))
    assert np.all(np.diff(vals) <= 1e-12)
    for j in range(q):
        first = M[np.flatnonzero(np.abs(M[:, j]) > 1e-12)[0], j]
        assert first > 0


def test_hh_basis_reproducible():
    g = lattice_graph(5, 5)
    X = np.column_stack([np.ones(25), np.arange(25.0)])
    assert_array_equal(comparators.hh_basis(X, g, 6), comparators.hh_basis(X, g, 6))
    assert_array_equal(comparators.canonical_signs(-comparators.hh_basis(X, g, 6)), comparators.hh_basis(X, g, 6))


@pytest.mark.parametrize("q", [-1, 24])
def test_hh_basis_q_out_of_range(q):
    g = lattice_graph(5, 5)
    X = np.column_stack([np.ones(25), np.arange(25.0)])
    with pytest.raises(ValueError):
        comparators.hh_basis(X, g, q)


def test_hh_basis_singular_design():
    g = lattice_graph(3, 3)
    with pytest.raises(RankDeficientError):
        comparators.hh_basis(np.ones((9, 2)), g, 2)


def grid_data(seed=0, side=6):
    gen = np.random.default_rng(seed)
    g = lattice_graph(side, side)
    mu = gen.uniform(15, 25, g.n)
    e = gen.uniform(70, 130, g.n)
    y = gen.poisson(e * np.exp(0.0244 * (mu - 20)))
    return HealthDataset.from_arrays(y, e), mu, g


def test_hh_q0_equals_bayes_glm():
    data, mu, g = grid_data()
    cfg = mcmc.FitConfig(n_iterations=3000, burn_in=1000, thin=5, seed=4)
    hh = comparators.fit_hh(data, mu, g, 0, cfg)
    glm = mcmc.run_chains(data, ExposureSet.point(mu), g, mcmc.MODEL_PRESETS["bayes-glm"], cfg)
    assert_array_equal(hh[0].samples["alpha"], glm[0].samples["alpha"])


def test_hh_fit_recovers_alpha():
    from carmap import simstudy

    sc = simstudy.SimScenario("C", study=1, confounding="C", sd_phi=0.01, replicates=1, seed=77)
    sim = simstudy.simulate_replicate(sc, 0)
    traces = comparators.fit_hh(sim.data, sim.exposures.weighted_means(), sim.graph, 50, mcmc.FitConfig(seed=1))
    mean, sd, _, _ = mcmc.posterior_alpha(traces)
    assert abs(mean - sim.truth) < 3 * sd
    assert "gamma" in traces[0].acceptance
