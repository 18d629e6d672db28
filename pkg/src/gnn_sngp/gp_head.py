"""Random-Fourier-feature Gaussian-process output layer.

Features Φ(R) = sqrt(2/D) cos(Ω (R/ℓ) + b) approximate an RBF kernel with
lengthscale ℓ. Only the output weights β are trained; Ω and b are drawn once.
After training, a Laplace posterior over β gives a logit variance
σ²(R) = Φᵀ Σ Φ that inflates away from the training features, and the
mean-field rule divides logits by sqrt(1 + λσ²).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .numcore import ParamStore, ShapeError, Tensor, add, as_tensor, cos, matmul, scale, softmax

MEAN_FIELD_FACTOR = math.pi / 8.0
NEG_VARIANCE_TOL = 1e-10


@dataclass
class RffState:
    omega: np.ndarray  # [in_dim, D], frozen
    bias: np.ndarray  # [D], frozen
    lengthscale: float = 2.0
    ridge: float = 1.0
    precision: np.ndarray | None = None  # [D, D]
    covariance: np.ndarray | None = None  # [D, D]

    @property
    def n_features(self) -> int:
        return self.omega.shape[1]

    @property
    def in_dim(self) -> int:
        return self.omega.shape[0]


@dataclass
class PredictiveOutput:
    logit_means: np.ndarray  # [n, 2]
    logit_variance: np.ndarray  # [n]
    probs: np.ndarray  # [n, 2]

    @property
    def uncertainty(self) -> np.ndarray:
        return 1.0 - self.probs.max(axis=1)

    @property
    def positive_prob(self) -> np.ndarray:
        return self.probs[:, 1]


def init_rff(
    in_dim: int,
    n_features: int,
    rng: np.random.Generator,
    lengthscale: float = 2.0,
    ridge: float = 1.0,
) -> RffState:
    if n_features < 1 or in_dim < 1:
        raise ValueError("need positive widths")
    if lengthscale <= 0 or ridge <= 0:
        raise ValueError("lengthscale and ridge must be positive")
    omega = rng.standard_normal((in_dim, n_features))
    bias = rng.uniform(0.0, 2.0 * np.pi, n_features)
    return RffState(omega, bias, float(lengthscale), float(ridge))


def rff_features(R, state: RffState):
    """Φ for a batch of embeddings. Differentiable when ``R`` is a Tensor."""
    D = state.n_features
    amp = math.sqrt(2.0 / D)
    if isinstance(R, Tensor):
        if R.data.ndim != 2 or R.shape[1] != state.in_dim:
            raise ShapeError(f"rff_features: expected width {state.in_dim}, got {R.shape}")
        dt = R.data.dtype
        z = add(matmul(scale(R, 1.0 / state.lengthscale), state.omega.astype(dt)), state.bias.astype(dt))
        return scale(cos(z), amp)
    R = np.asarray(R, dtype=np.float64)
    squeeze = R.ndim == 1
    R2 = R[None, :] if squeeze else R
    if R2.shape[1] != state.in_dim:
        raise ShapeError(f"rff_features: expected width {state.in_dim}, got {R.shape}")
    phi = amp * np.cos((R2 / state.lengthscale) @ state.omega + state.bias)
    return phi[0] if squeeze else phi


def init_gp_weights(store: ParamStore, state: RffState) -> None:
    store.add("gp/beta", np.zeros((state.n_features, 2)))


def gp_logits(phi, store: ParamStore) -> Tensor:
    beta = store["gp/beta"]
    phi = as_tensor(phi)
    if phi.data.ndim != 2 or phi.shape[1] != beta.shape[0]:
        raise ShapeError(f"gp_logits: features {phi.shape} vs beta {beta.shape}")
    return matmul(phi, beta)


def laplace_fit(phi: np.ndarray, p_hat: np.ndarray, state: RffState) -> RffState:
    """Λ = sI + Σᵢ p̂ᵢ(1 − p̂ᵢ) ΦᵢΦᵢᵀ and Σ = Λ⁻¹ (Cholesky solve)."""
    D = state.n_features
    phi = np.asarray(phi, dtype=np.float64).reshape(-1, D)
    p_hat = np.asarray(p_hat, dtype=np.float64).reshape(-1)
    if len(phi) != len(p_hat):
        raise ShapeError("laplace_fit: feature and probability counts differ")
    w = p_hat * (1.0 - p_hat)
    prec = state.ridge * np.eye(D) + (phi * w[:, None]).T @ phi
    prec = 0.5 * (prec + prec.T)
    try:
        factor = scipy.linalg.cho_factor(prec, lower=True)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"Laplace precision is not positive definite: {exc}") from exc
    cov = scipy.linalg.cho_solve(factor, np.eye(D))
    cov = 0.5 * (cov + cov.T)
    return RffState(state.omega, state.bias, state.lengthscale, state.ridge, prec, cov)


def logit_variance(phi: np.ndarray, state: RffState) -> np.ndarray:
    if state.covariance is None:
        raise ValueError("head has no covariance; run laplace_fit first")
    var = np.einsum("nd,de,ne->n", phi, state.covariance, phi)
    if (var < -NEG_VARIANCE_TOL).any():
        raise ValueError(f"negative predictive variance {var.min():.3e}: covariance is broken")
    return np.maximum(var, 0.0)


def mean_field_probs(means: np.ndarray, variance: np.ndarray, factor: float = MEAN_FIELD_FACTOR) -> np.ndarray:
    means = np.atleast_2d(np.asarray(means, dtype=np.float64))
    variance = np.asarray(variance, dtype=np.float64).reshape(-1)
    return softmax(means / np.sqrt(1.0 + factor * variance)[:, None])


def predict(R: np.ndarray, state: RffState, beta: np.ndarray) -> PredictiveOutput:
    phi = rff_features(np.atleast_2d(R), state)
    means = phi @ np.asarray(beta, dtype=np.float64)
    var = logit_variance(phi, state)
    return PredictiveOutput(means, var, mean_field_probs(means, var))
