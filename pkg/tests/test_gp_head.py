import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import spearmanr

from gnn_sngp import gp_head
from gnn_sngp.gp_head import (
    MEAN_FIELD_FACTOR,
    RffState,
    gp_logits,
    init_gp_weights,
    init_rff,
    laplace_fit,
    logit_variance,
    mean_field_probs,
    rff_features,
)
from gnn_sngp.numcore import ParamStore, ShapeError, Tensor, adam_step, gradcheck, make_rng, softmax, softmax_cross_entropy


def gaussian_kernel(x, y, ell):
    return math.exp(-np.sum((x - y) ** 2) / (2 * ell**2))


def test_single_feature_at_zero():
    st_ = RffState(np.zeros((3, 1)), np.zeros(1))
    np.testing.assert_allclose(rff_features(np.ones(3), st_), [math.sqrt(2)], rtol=0, atol=1e-15)


def test_kernel_approximation_and_self_similarity():
    r = np.random.default_rng(0)
    st_ = init_rff(8, 4096, make_rng(0, 2), lengthscale=2.0)
    worst = worst_self = 0.0
    for _ in range(100):
        x, y = r.standard_normal((2, 8))
        px, py = rff_features(x, st_), rff_features(y, st_)
        worst = max(worst, abs(px @ py - gaussian_kernel(x, y, 2.0)))
        worst_self = max(worst_self, abs(px @ px - 1.0))
    assert worst <= 0.05
    assert worst_self <= 0.05


@given(st.integers(0, 2**32 - 1))
def test_feature_norm_bounded(seed):
    r = np.random.default_rng(seed)
    st_ = init_rff(5, 64, r, lengthscale=float(r.uniform(0.1, 5)))
    phi = rff_features(10 * r.standard_normal((7, 5)), st_)
    assert (np.linalg.norm(phi, axis=1) <= math.sqrt(2) + 1e-12).all()


def test_same_seed_same_features(rng):
    a = init_rff(4, 32, make_rng(9, 2))
    b = init_rff(4, 32, make_rng(9, 2))
    X = rng.standard_normal((5, 4))
    assert np.array_equal(rff_features(X, a), rff_features(X, b))


def test_tensor_and_array_paths_agree(rng):
    st_ = init_rff(4, 16, rng)
    X = rng.standard_normal((3, 4))
    np.testing.assert_allclose(rff_features(Tensor(X), st_).data, rff_features(X, st_), atol=1e-15)


def test_width_mismatch(rng):
    st_ = init_rff(4, 16, rng)
    with pytest.raises(ShapeError):
        rff_features(np.ones((2, 3)), st_)


def test_zero_beta_zero_logits(rng):
    st_ = init_rff(4, 16, rng)
    store = ParamStore()
    init_gp_weights(store, st_)
    np.testing.assert_array_equal(gp_logits(rff_features(np.ones((2, 4)), st_), store).data, np.zeros((2, 2)))


def test_beta_gradcheck(rng):
    st_ = init_rff(4, 12, rng)
    store = ParamStore()
    init_gp_weights(store, st_)
    store["gp/beta"].data[...] = rng.standard_normal((12, 2))
    phi = rff_features(rng.standard_normal((6, 4)), st_)
    y = rng.integers(2, size=6)
    assert gradcheck(lambda: softmax_cross_entropy(gp_logits(phi, store), y), store).max_error < 1e-4


def test_beta_training_separable(rng):
    # two tight clusters are linearly separable in feature space
    X = np.vstack([rng.normal(-2, 0.1, (20, 2)), rng.normal(2, 0.1, (20, 2))])
    y = np.repeat([0, 1], 20)
    st_ = init_rff(2, 128, make_rng(1, 2), lengthscale=1.0)
    phi = rff_features(X, st_)
    store = ParamStore()
    init_gp_weights(store, st_)
    for _ in range(300):
        store.zero_grad()
        softmax_cross_entropy(gp_logits(phi, store), y).backward()
        adam_step(store, lr=0.05)
    assert (gp_logits(phi, store).data.argmax(1) == y).mean() == 1.0


def test_laplace_no_examples():
    st_ = laplace_fit(np.zeros((0, 3)), np.zeros(0), RffState(np.zeros((2, 3)), np.zeros(3), ridge=2.0))
    np.testing.assert_allclose(st_.precision, 2 * np.eye(3))
    np.testing.assert_allclose(st_.covariance, np.eye(3) / 2)


def test_laplace_single_example():
    st_ = laplace_fit(np.eye(4)[:1], np.array([0.5]), RffState(np.zeros((2, 4)), np.zeros(4)))
    np.testing.assert_allclose(st_.precision, np.diag([1.25, 1, 1, 1]))
    np.testing.assert_allclose(st_.covariance, np.diag([0.8, 1, 1, 1]), atol=1e-15)


@pytest.mark.parametrize("D", [1, 8, 64])
def test_laplace_matches_dense_inverse(rng, D):
    st_ = init_rff(3, D, rng)
    phi = rff_features(rng.standard_normal((50, 3)), st_)
    p = rng.uniform(0, 1, 50)
    fit = laplace_fit(phi, p, st_)
    oracle = np.linalg.inv(np.eye(D) + sum(pi * (1 - pi) * np.outer(f, f) for f, pi in zip(phi, p)))
    np.testing.assert_allclose(fit.covariance, oracle, atol=1e-8)
    np.testing.assert_allclose(fit.covariance @ fit.precision, np.eye(D), atol=1e-6)
    assert np.array_equal(fit.covariance, fit.covariance.T)
    assert np.linalg.eigvalsh(fit.covariance).min() > 0
    # Ω and b untouched
    assert fit.omega is st_.omega and fit.bias is st_.bias


def test_zero_variance_is_plain_softmax(rng):
    m = rng.standard_normal((5, 2))
    np.testing.assert_allclose(mean_field_probs(m, np.zeros(5)), softmax(m), atol=1e-12)


def test_mean_field_halves_logits():
    var = np.array([3.0 / MEAN_FIELD_FACTOR])
    np.testing.assert_allclose(mean_field_probs(np.array([[2.0, 0.0]]), var), softmax(np.array([[1.0, 0.0]])), atol=1e-15)


@given(st.floats(-20, 20), st.floats(-20, 20))
def test_mean_field_monotone_to_half(a, b):
    var = np.concatenate([[0.0], np.geomspace(1e-3, 1e9, 60)])
    p = mean_field_probs(np.tile([a, b], (len(var), 1)), var).max(1)
    assert (np.diff(p) <= 1e-15).all()
    assert p[-1] == pytest.approx(0.5, abs=1e-3)


def test_negative_variance_rejected():
    st_ = RffState(np.zeros((1, 2)), np.zeros(2), covariance=-np.eye(2))
    with pytest.raises(ValueError):
        logit_variance(np.ones((1, 2)), st_)


def test_predict_needs_laplace(rng):
    st_ = init_rff(2, 8, rng)
    with pytest.raises(ValueError):
        gp_head.predict(np.zeros((1, 2)), st_, np.zeros((8, 2)))


@given(st.integers(0, 2**32 - 1))
def test_posterior_variance_below_prior(seed):
    r = np.random.default_rng(seed)
    s = float(r.uniform(0.5, 3))
    st_ = init_rff(3, 32, r, ridge=s)
    fit = laplace_fit(rff_features(r.standard_normal((40, 3)), st_), r.uniform(0, 1, 40), st_)
    phi = rff_features(5 * r.standard_normal((20, 3)), st_)
    var = logit_variance(phi, fit)
    prior = (phi * phi).sum(1) / s
    assert (var <= prior + 1e-12).all()
    assert (prior <= 2 / s + 1e-12).all()


def test_variance_grows_away_from_training_cluster():
    # rays leave the right-hand cluster on the side facing away from the other
    # cluster; radii span 0..3 lengthscales, past which σ² sits at its prior
    r = np.random.default_rng(3)
    train = np.vstack([r.normal([-1.5, 0], 0.4, (100, 2)), r.normal([1.5, 0], 0.4, (100, 2))])
    st_ = init_rff(2, 1024, make_rng(0, 2), lengthscale=1.0)
    fit = laplace_fit(rff_features(train, st_), np.full(len(train), 0.5), st_)
    radii = np.linspace(0, 3.0, 20)
    for angle in np.linspace(-np.pi / 2, np.pi / 2, 7):
        ray = np.stack([radii * np.cos(angle), radii * np.sin(angle)], 1) + [1.5, 0]
        var = logit_variance(rff_features(ray, fit), fit)
        assert spearmanr(radii, var).statistic > 0.9
