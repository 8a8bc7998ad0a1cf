import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from carmap import localcluster as lc
from carmap.numerics import rng_stream

from conftest import grid_cdf, ks_against_grid

odd_g = st.sampled_from([3, 5, 7, 9])


def test_allocation_prior_uniform_limit():
    for z in range(1, 6):
        assert lc.allocation_prior(z, 0.0, 5) == pytest.approx(0.2, rel=1e-15)


def test_allocation_prior_point_mass_limit():
    assert lc.allocation_prior(3, 100.0, 5) > 1 - 1e-10


def test_allocation_prior_delta_one():
    w = np.exp([-4.0, -1.0, 0.0, -1.0, -4.0])
    ref = w / w.sum()
    got = [lc.allocation_prior(z, 1.0, 5) for z in range(1, 6)]
    assert_allclose(got, ref, rtol=1e-14)
    assert_allclose(got, [0.01033, 0.20762, 0.56422, 0.20762, 0.01033], atol=1e-4)


def test_allocation_prior_out_of_range():
    with pytest.raises(ValueError):
        lc.allocation_prior(0, 1.0, 5)
    with pytest.raises(ValueError):
        lc.allocation_prior(6, 1.0, 5)


@given(st.floats(0, 100), odd_g)
@settings(max_examples=100, deadline=None)
def test_allocation_prior_normalised_and_symmetric(delta, G):
    f = [lc.allocation_prior(z, delta, G) for z in range(1, G + 1)]
    assert sum(f) == pytest.approx(1.0, abs=1e-12)
    centre = (G + 1) // 2
    for j in range(1, centre):
        assert f[centre - 1 + j] == pytest.approx(f[centre - 1 - j], rel=1e-14)


def _state(G=5, delta=1.0, n=10):
    return lc.ClusterState(np.linspace(-1, 1, G), np.full(n, (G + 1) // 2), delta)


def test_sample_allocation_equal_loglik_follows_prior():
    state = _state(G=5, delta=0.5)
    rng = rng_stream(1)
    draws = np.array([lc.sample_allocation(0, state, np.full(5, -3.0), rng) for _ in range(100_000)])
    freq = np.bincount(draws, minlength=6)[1:] / draws.size
    prior = [lc.allocation_prior(z, 0.5, 5) for z in range(1, 6)]
    assert_allclose(freq, prior, atol=4 * math.sqrt(0.25 / draws.size))


def test_sample_allocation_infinite_loglik():
    state = _state(G=5, delta=0.0)
    rng = rng_stream(2)
    ll = np.array([-1.0, np.inf, -2.0, -1.0, 0.0])
    assert all(lc.sample_allocation(0, state, ll, rng) == 2 for _ in range(200))


def test_sample_allocation_three_classes():
    state = _state(G=3, delta=0.5)
    ll = np.array([-1.0, -1.5, -0.2])
    products = np.exp(ll) * np.exp([-0.5, 0.0, -0.5])
    ref = products / products.sum()
    assert_allclose(lc.allocation_probabilities(state, ll), ref, rtol=1e-14)
    rng = rng_stream(3)
    draws = np.array([lc.sample_allocation(0, state, ll, rng) for _ in range(100_000)])
    freq = np.bincount(draws, minlength=4)[1:] / draws.size
    assert_allclose(freq, ref, atol=0.006)


def test_sample_allocation_underflow_error():
    state = _state(G=3)
    with pytest.raises(FloatingPointError):
        lc.sample_allocation(0, state, np.full(3, -np.inf), rng_stream(0))


def test_cluster_state_validation():
    with pytest.raises(ValueError):
        lc.ClusterState([0.0, 0.0, 1.0], [1, 2], 1.0)
    with pytest.raises(ValueError):
        lc.ClusterState([0.0, 1.0, 2.0], [0, 2], 1.0)
    with pytest.raises(ValueError):
        lc.ClusterState([0.0, 1.0, 2.0], [1, 2], 150.0)


def test_phi_reconstruction():
    state = lc.ClusterState([-0.5, 0.0, 0.7], [1, 3, 2, 3], 2.0)
    theta = np.array([0.1, -0.2, 0.3, 0.0])
    lam = state.lam
    expected = [lam[0] + theta[0], lam[2] + theta[1], lam[1] + theta[2], lam[2] + theta[3]]
    assert state.phi(theta).tolist() == expected


def test_lambda_empty_class_always_accepts_and_stays_inside():
    state = lc.ClusterState([-1.0, 0.0, 1.0], [1, 1, 3], 1.0)
    rng = rng_stream(4)
    y = np.array([5.0, 6.0, 7.0])
    e = np.array([5.0, 5.0, 5.0])
    off = np.zeros(3)
    moved = 0
    for _ in range(100_000):
        new = lc.sample_lambda(2, state, y, e, off, rng, step=0.3)
        assert -1.0 < new < 1.0
        moved += new != state.lam[1]
        state.lam[1] = new
    assert moved / 100_000 > 0.999


def test_lambda_single_area_matches_grid():
    # one area in the middle class with Y = E and offset c: target exp(y lam - E e^{c + lam}) on (lo, hi)
    y, e, c = 40.0, 40.0, 0.3
    lo, hi = -3.0, 3.0
    state = lc.ClusterState([lo, 0.0, hi], [2], 1.0)
    rng = rng_stream(5)
    draws = []
    for it in range(60_000):
        state.lam[1] = lc.sample_lambda(2, state, [y], [e], [c], rng, step=0.3)
        if it >= 1000:
            draws.append(state.lam[1])
    grid = np.linspace(lo, hi, 60_001)
    cdf = grid_cdf(lambda g: y * g - e * np.exp(c + g), grid)
    assert ks_against_grid(draws[::5], grid, cdf) < 0.05
    assert np.mean(draws) == pytest.approx(-c, abs=0.03)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_lambda_ordering_preserved(seed):
    gen = np.random.default_rng(seed)
    G = 5
    lam = np.sort(gen.normal(0, 1, G)) + np.arange(G) * 1e-3
    z = gen.integers(1, G + 1, 12)
    state = lc.ClusterState(lam, z, 1.0)
    y = gen.poisson(20, 12).astype(float)
    e = gen.uniform(10, 30, 12)
    off = gen.normal(0, 0.2, 12)
    rng = rng_stream(seed % 1000)
    for _ in range(50):
        for i in range(1, G + 1):
            state.lam[i - 1] = lc.sample_lambda(i, state, y, e, off, rng, step=0.5)
        assert np.all(np.diff(state.lam) > 0)


def test_delta_prefers_large_when_all_central():
    state = lc.ClusterState(np.linspace(-1, 1, 5), np.full(30, 3), 10.0)
    rng = rng_stream(6)
    lp = [lc.delta_log_posterior(d, state) for d in np.linspace(0, 100, 50)]
    assert np.all(np.diff(lp) >= -1e-12)
    draws = []
    for _ in range(100_000):
        state.delta = lc.sample_delta(state, rng, step=10.0)
        assert 0.0 <= state.delta <= 100.0
        draws.append(state.delta)
    assert np.mean(draws) > 50.0


def test_delta_concentrates_near_zero_when_spread():
    z = np.repeat(np.arange(1, 6), 8)
    state = lc.ClusterState(np.linspace(-1, 1, 5), z, 1.0)
    rng = rng_stream(7)
    draws = []
    for it in range(100_000):
        state.delta = lc.sample_delta(state, rng, step=0.3)
        if it >= 1000:
            draws.append(state.delta)
    grid = np.linspace(0, 100, 200_001)
    cdf = grid_cdf(np.vectorize(lambda d: lc.delta_log_posterior(d, state)), grid)
    assert ks_against_grid(draws[::10], grid, cdf) < 0.05
    assert np.mean(draws) < 1.0


def test_initial_cluster_state():
    r = np.random.default_rng(3).normal(0, 0.3, 50)
    st_ = lc.initial_cluster_state(r, 5)
    assert np.all(np.diff(st_.lam) > 0)
    assert st_.z.min() >= 1 and st_.z.max() <= 5
    tied = lc.initial_cluster_state(np.zeros(20), 3)
    assert np.all(np.diff(tied.lam) > 0)
