import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal
from scipy.spatial.distance import cdist

from carmap import numerics as nm
from carmap.graph import lattice_graph


def test_cholesky_identity():
    assert_array_equal(nm.cholesky(np.eye(3)), np.eye(3))


def test_cholesky_hand_example():
    L = nm.cholesky([[4.0, 2.0], [2.0, 3.0]])
    assert_allclose(L, [[2.0, 0.0], [1.0, math.sqrt(2.0)]], atol=1e-15)
    assert_allclose(L @ L.T, [[4.0, 2.0], [2.0, 3.0]], atol=1e-14)


def test_cholesky_indefinite():
    with pytest.raises(nm.DecompositionError):
        nm.cholesky([[1.0, 2.0], [2.0, 1.0]])


def test_cholesky_rejects_asymmetric():
    with pytest.raises(ValueError):
        nm.cholesky([[1.0, 0.5], [0.0, 1.0]])


@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_cholesky_reconstruction(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n))
    m = a @ a.T + n * np.eye(n)
    L = nm.cholesky(m)
    assert np.max(np.abs(L @ L.T - m)) <= 1e-8 * np.max(np.abs(m))
    assert_allclose(nm.log_det_cholesky(m), np.linalg.slogdet(m)[1], rtol=1e-10)


def test_sym_eigen_diagonal():
    vals, vecs = nm.sym_eigen(np.diag([1.0, 3.0]))
    assert_allclose(vals, [3.0, 1.0])
    assert_allclose(np.abs(vecs), [[0.0, 1.0], [1.0, 0.0]])


def test_sym_eigen_swap():
    vals, vecs = nm.sym_eigen([[0.0, 1.0], [1.0, 0.0]])
    assert_allclose(vals, [1.0, -1.0], atol=1e-15)
    s = 1 / math.sqrt(2)
    assert_allclose(np.abs(vecs[:, 0]), [s, s])
    assert_allclose(vecs[0, 1] * vecs[1, 1], -0.5)


@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_sym_eigen_properties(n, seed):
    a = np.random.default_rng(seed).normal(size=(n, n))
    m = a + a.T
    vals, vecs = nm.sym_eigen(m)
    assert np.all(np.diff(vals) <= 0)
    assert_allclose(vals.sum(), np.trace(m), atol=1e-10)
    assert np.max(np.abs(m @ vecs - vecs * vals)) <= 1e-8 * max(np.max(np.abs(m)), 1)
    assert_allclose(vecs.T @ vecs, np.eye(n), atol=1e-10)


def test_laplacian_single_zero_eigenvalue():
    g = lattice_graph(4, 5)
    vals, vecs = nm.sym_eigen(g.laplacian())
    assert np.sum(np.abs(vals) < 1e-8) == 1
    v = vecs[:, -1]
    assert_allclose(v / v[0], np.ones(g.n), atol=1e-8)


def _matern_scalar(d, variance, length):
    # direct evaluation of the nu = 5/2 closed form
    a = math.sqrt(5.0) * d / length
    return variance * (1.0 + a + a * a / 3.0) * math.exp(-a)


def test_matern_value_at_range():
    ref = (1 + math.sqrt(5) + 5 / 3) * math.exp(-math.sqrt(5))
    assert ref == pytest.approx(0.5240, abs=5e-5)
    assert nm.matern52(75.0, 1.0, 75.0) == pytest.approx(ref, rel=1e-14)
    assert nm.matern52(75.0, 1.0, 75.0) == pytest.approx(_matern_scalar(75.0, 1.0, 75.0), rel=1e-14)


def test_matern_limits():
    assert nm.matern52(0.0, 2.5, 10.0) == 2.5
    d = np.linspace(0, 2000, 500)
    c = nm.matern52(d, 1.0, 75.0)
    assert np.all(np.diff(c) < 0)
    assert c[-1] < 1e-10


def test_matern_covariance_matches_scalar_formula():
    rng = np.random.default_rng(4)
    xy = rng.uniform(0, 100, (12, 2))
    c = nm.matern_covariance(xy, 3.0, 40.0)
    d = cdist(xy, xy)
    ref = np.vectorize(lambda x: _matern_scalar(x, 3.0, 40.0))(d)
    assert_allclose(c, ref, rtol=1e-13)


@pytest.mark.parametrize("variance,length", [(0.0, 1.0), (1.0, 0.0), (-1.0, 5.0)])
def test_matern_rejects_bad_parameters(variance, length):
    with pytest.raises(ValueError):
        nm.matern_covariance(np.zeros((2, 2)) + [[0, 0], [1, 1]], variance, length)


def test_matern_other_smoothness_not_supported():
    with pytest.raises(NotImplementedError):
        nm.matern_covariance([[0.0, 0.0], [1.0, 0.0]], 1.0, 1.0, smoothness=1.5)


def test_matern_default_layout_factorises():
    from carmap.simstudy import default_layout

    lay = default_layout()
    L = nm.jittered_cholesky(nm.matern_covariance(lay.coords, 16.0, 75.0))
    assert np.all(np.isfinite(L))


def test_sample_mvn_zero_factor():
    mean = np.array([1.0, -2.0, 3.5])
    out = nm.sample_mvn(mean, np.zeros((3, 3)), nm.rng_stream(1))
    assert_array_equal(out, mean)


def test_sample_mvn_moments():
    rng = nm.rng_stream(7)
    n = 100_000
    mean = np.array([0.5, -1.0, 2.0])
    draws = np.array([nm.sample_mvn(mean, np.eye(3), rng) for _ in range(n)])
    assert np.all(np.abs(draws.mean(axis=0) - mean) < 4 / math.sqrt(n))
    assert_allclose(draws.var(axis=0), 1.0, rtol=0.05)


def test_sample_mvn_deterministic():
    a = nm.sample_mvn(np.zeros(4), np.eye(4), nm.rng_stream(3, 1))
    b = nm.sample_mvn(np.zeros(4), np.eye(4), nm.rng_stream(3, 1))
    assert_array_equal(a, b)


def test_sample_mvn_dimension_mismatch():
    with pytest.raises(ValueError):
        nm.sample_mvn(np.zeros(2), np.eye(3), nm.rng_stream(0))


def test_rng_streams_independent():
    a = nm.rng_stream(5, 0).random(5)
    b = nm.rng_stream(5, 1).random(5)
    assert not np.array_equal(a, b)
    assert_array_equal(a, nm.rng_stream(5, 0).random(5))
