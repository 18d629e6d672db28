"""Exact binary Gaussian-process classifier with a Laplace posterior.

RBF kernel k(x, x') = a² exp(−‖x − x'‖² / (2ℓ²)), logistic likelihood.
The mode is found by Newton's method in the numerically stable
B = I + W½ K W½ form; predictions squash the latent mean with the same
mean-field factor π/8 used by the random-feature head.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import expit, log_expit

from .gp_head import MEAN_FIELD_FACTOR, PredictiveOutput

JITTER = 1e-6
MODE_TOL = 1e-8
MAX_NEWTON = 100
AMPLITUDE_GRID = (0.5, 1.0, 2.0)
LENGTHSCALE_GRID = (0.5, 1.0, 2.0, 4.0)


class GpcFitError(RuntimeError):
    pass


def rbf_kernel(X1: np.ndarray, X2: np.ndarray, amplitude: float, lengthscale: float) -> np.ndarray:
    X1 = np.asarray(X1, dtype=np.float64)
    X2 = np.asarray(X2, dtype=np.float64)
    sq = (X1 * X1).sum(1)[:, None] + (X2 * X2).sum(1)[None, :] - 2.0 * X1 @ X2.T
    return amplitude**2 * np.exp(-np.maximum(sq, 0.0) / (2.0 * lengthscale**2))


@dataclass
class GpcModel:
    X: np.ndarray
    y: np.ndarray  # ±1
    amplitude: float
    lengthscale: float
    f_hat: np.ndarray
    K: np.ndarray
    grad_loglik: np.ndarray  # ∇ log p(y | f̂)
    sqrt_w: np.ndarray
    chol_B: np.ndarray  # lower Cholesky factor of I + W½ K W½
    n_iter: int
    objective_trace: list[float]

    @property
    def stationarity(self) -> float:
        return float(np.abs(self.f_hat - self.K @ self.grad_loglik).max())


def _objective(a, f, y):
    return -0.5 * a @ f + log_expit(y * f).sum()


def gpc_fit(X, y, amplitude: float = 1.0, lengthscale: float = 1.0, jitter: float = JITTER) -> GpcModel:
    """Newton iterations for the posterior mode; labels may be {0,1} or {−1,+1}."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y).reshape(-1)
    if len(X) != len(y) or len(y) < 1:
        raise ValueError("need matching, non-empty X and y")
    if set(np.unique(y)) <= {0, 1}:
        y = 2.0 * y - 1.0
    y = y.astype(np.float64)
    if not set(np.unique(y)) <= {-1.0, 1.0}:
        raise ValueError("labels must be in {0,1} or {-1,+1}")
    n = len(y)
    K = rbf_kernel(X, X, amplitude, lengthscale)
    asym = np.abs(K - K.T).max()
    if asym > 1e-12:
        raise GpcFitError(f"kernel matrix asymmetric by {asym:.2e}")
    K = 0.5 * (K + K.T) + jitter * amplitude**2 * np.eye(n)
    try:
        np.linalg.cholesky(K)
    except np.linalg.LinAlgError as exc:
        raise GpcFitError(f"kernel not PD after jitter (cond ~ {np.linalg.cond(K):.2e})") from exc

    f = np.zeros(n)
    a = np.zeros(n)
    obj = _objective(a, f, y)
    trace = [obj]
    it = 0
    for it in range(1, MAX_NEWTON + 1):
        pi = expit(f)
        t = (y + 1.0) / 2.0
        grad = t - pi
        W = pi * (1.0 - pi)
        sw = np.sqrt(W)
        L = np.linalg.cholesky(np.eye(n) + sw[:, None] * K * sw[None, :])
        b = W * f + grad
        c = scipy.linalg.solve_triangular(L, sw * (K @ b), lower=True)
        a_new = b - sw * scipy.linalg.solve_triangular(L.T, c, lower=False)
        # Newton step with step halving to keep the objective monotone
        step = 1.0
        while True:
            a_try = a + step * (a_new - a)
            f_try = K @ a_try
            obj_try = _objective(a_try, f_try, y)
            if obj_try >= obj - 1e-12 or step < 1e-10:
                break
            step *= 0.5
        if obj_try < obj - 1e-9:
            raise GpcFitError(f"Newton step decreased the log posterior at iteration {it}")
        a, f, obj = a_try, f_try, obj_try
        trace.append(obj)
        resid = np.abs(f - K @ (t - expit(f))).max()
        if resid < MODE_TOL:
            break
    else:
        raise GpcFitError(f"mode not found after {MAX_NEWTON} iterations (residual {resid:.2e})")

    pi = expit(f)
    grad = (y + 1.0) / 2.0 - pi
    sw = np.sqrt(pi * (1.0 - pi))
    L = np.linalg.cholesky(np.eye(n) + sw[:, None] * K * sw[None, :])
    return GpcModel(X, y, float(amplitude), float(lengthscale), f, K, grad, sw, L, it, trace)


def gpc_latent(model: GpcModel, Xs) -> tuple[np.ndarray, np.ndarray]:
    """Laplace latent mean and variance at query rows."""
    Xs = np.atleast_2d(np.asarray(Xs, dtype=np.float64))
    if Xs.shape[1] != model.X.shape[1]:
        raise ValueError(f"query width {Xs.shape[1]} != train width {model.X.shape[1]}")
    Ks = rbf_kernel(model.X, Xs, model.amplitude, model.lengthscale)
    mean = Ks.T @ model.grad_loglik
    v = scipy.linalg.solve_triangular(model.chol_B, model.sqrt_w[:, None] * Ks, lower=True)
    var = model.amplitude**2 - (v * v).sum(0)
    return mean, np.maximum(var, 0.0)


def gpc_predict(model: GpcModel, Xs) -> PredictiveOutput:
    mean, var = gpc_latent(model, Xs)
    p1 = expit(mean / np.sqrt(1.0 + MEAN_FIELD_FACTOR * var))
    logits = np.stack([np.zeros_like(mean), mean], axis=1)
    return PredictiveOutput(logits, var, np.stack([1.0 - p1, p1], axis=1))


def select_gpc(X_train, y_train, X_val, y_val, amplitudes=AMPLITUDE_GRID, lengthscales=LENGTHSCALE_GRID):
    """Pick (a, ℓ) from the fixed grid by validation NLL; ties go to the first grid point."""
    y_val = np.asarray(y_val).reshape(-1)
    best = None
    for a, ell in itertools.product(amplitudes, lengthscales):
        model = gpc_fit(X_train, y_train, a, ell)
        p = gpc_predict(model, X_val).probs
        nll = -np.log(np.clip(p[np.arange(len(y_val)), y_val], 1e-12, None)).mean()
        if best is None or nll < best[0]:
            best = (nll, a, ell)
    return best[1], best[2]
