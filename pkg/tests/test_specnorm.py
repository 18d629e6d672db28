import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gnn_sngp.numcore import ParamStore, Tensor, make_rng, matmul, sum_rows
from gnn_sngp.specnorm import SnState, apply_sn, normalize, power_iterate, power_iterate_to_tol, spectral_norm

from conftest import gapped_matrix


def _state(W, seed=0, bound=1.0):
    return SnState.init(W.shape[0], W.shape[1], make_rng(seed), bound=bound)


def _svd_norm(W):
    return np.linalg.svd(W, compute_uv=False)[0]


def test_diag_converges():
    W = np.diag([3.0, 1.0])
    sigma, _ = power_iterate(W, _state(W), 50)
    assert sigma == pytest.approx(3.0, abs=1e-6)


def test_identity_one_iteration():
    W = np.eye(5)
    sigma, _ = power_iterate(W, _state(W), 1)
    assert sigma == pytest.approx(1.0, abs=1e-15)


def test_gapped_matrices_match_svd_at_50_iters():
    r = np.random.default_rng(0)
    for i in range(100):
        W = gapped_matrix(r)
        sigma, _ = power_iterate(W, _state(W, i), 50)
        assert abs(sigma - _svd_norm(W)) / _svd_norm(W) < 1e-3


def test_gaussian_matrices_match_svd_when_converged():
    r = np.random.default_rng(0)
    for i in range(100):
        W = r.standard_normal((32, 64))
        sigma, _, _ = power_iterate_to_tol(W, _state(W, i))
        assert abs(sigma - _svd_norm(W)) / _svd_norm(W) < 1e-3


def test_eigh_helper_matches_svd():
    r = np.random.default_rng(1)
    for shape in [(3, 7), (7, 3), (5, 5)]:
        W = r.standard_normal(shape)
        assert spectral_norm(W) == pytest.approx(_svd_norm(W), rel=1e-12)


def test_zero_matrix():
    W = np.zeros((3, 4))
    st0 = _state(W)
    sigma, st1 = power_iterate(W, st0, 5)
    assert sigma == 0.0
    np.testing.assert_array_equal(st1.u, st0.u)
    np.testing.assert_array_equal(st1.v, st0.v)


def test_apply_sn_below_bound_is_identity():
    W = np.array([[0.5, 0.0], [0.0, 0.2]])
    st = SnState(np.array([1.0, 0.0]), np.array([1.0, 0.0]), sigma=0.5, bound=1.0)
    np.testing.assert_array_equal(apply_sn(W, st), W)


def test_apply_sn_scales_to_bound():
    W = np.diag([4.0, 1.0])
    Wn, _ = normalize(W, _state(W, bound=2.0), 50)
    np.testing.assert_allclose(Wn, np.diag([2.0, 0.5]), atol=1e-9)


def test_apply_sn_gradient_treats_sigma_as_constant():
    W = np.diag([4.0, 1.0])
    _, st = power_iterate(W, _state(W), 50)
    store = ParamStore()
    w = store.add("W", W)
    out = sum_rows(apply_sn(w, st))
    matmul(out, Tensor(np.ones((2, 1)))).backward()
    np.testing.assert_allclose(w.grad, np.full((2, 2), 1.0 / st.sigma))


@given(st.integers(0, 2**32 - 1), st.integers(1, 12), st.integers(1, 12), st.floats(0.1, 5))
def test_normalized_norm_within_bound(seed, rows, cols, c):
    r = np.random.default_rng(seed)
    W = 3 * r.standard_normal((rows, cols))
    _, st, _ = power_iterate_to_tol(W, _state(W, seed % 97, bound=c))
    Wn = apply_sn(W, st)
    sigma, _, _ = power_iterate_to_tol(Wn, st)
    assert sigma <= c * (1 + 1e-3)


@given(st.integers(0, 2**32 - 1), st.integers(1, 10), st.integers(1, 10))
def test_sigma_monotone_and_lower_bound(seed, rows, cols):
    r = np.random.default_rng(seed)
    W = r.standard_normal((rows, cols))
    state = _state(W, seed % 89)
    prev = -np.inf
    for _ in range(20):
        sigma, state = power_iterate(W, state, 1)
        assert sigma >= prev - 1e-12
        assert sigma <= _svd_norm(W) * (1 + 1e-12)
        assert np.linalg.norm(state.u) == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.norm(state.v) == pytest.approx(1.0, abs=1e-12)
        prev = sigma


@given(st.integers(0, 2**32 - 1), st.integers(1, 10), st.integers(1, 10))
def test_apply_sn_idempotent(seed, rows, cols):
    r = np.random.default_rng(seed)
    W = 4 * r.standard_normal((rows, cols))
    _, st1, _ = power_iterate_to_tol(W, _state(W, seed % 83))
    once = apply_sn(W, st1)
    _, st2, _ = power_iterate_to_tol(once, st1)
    twice = apply_sn(once, st2)
    np.testing.assert_allclose(twice, once, atol=1e-6)


@given(st.integers(0, 2**32 - 1))
def test_lipschitz_on_sampled_pairs(seed):
    r = np.random.default_rng(seed)
    W = 2 * r.standard_normal((9, 6))
    _, st, _ = power_iterate_to_tol(W, _state(W, 3))
    Wn = apply_sn(W, st)
    x1, x2 = r.standard_normal((2, 20, 9))
    lhs = np.linalg.norm(x1 @ Wn - x2 @ Wn, axis=1)
    assert (lhs <= (1 + 1e-3) * np.linalg.norm(x1 - x2, axis=1)).all()
