"""Spectral-norm estimation by power iteration and the norm-ball projection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numcore import Tensor, scale

EVAL_POWER_ITERS = 50


@dataclass
class SnState:
    u: np.ndarray  # unit vector, len = rows of W
    v: np.ndarray  # unit vector, len = cols of W
    n_power_iters: int = 1
    bound: float = 1.0
    sigma: float = 0.0  # latest estimate, treated as a constant in backward

    @classmethod
    def init(cls, rows: int, cols: int, rng: np.random.Generator, n_power_iters: int = 1, bound: float = 1.0):
        if bound <= 0:
            raise ValueError("spectral bound must be positive")
        u = rng.standard_normal(rows)
        v = rng.standard_normal(cols)
        return cls(u / np.linalg.norm(u), v / np.linalg.norm(v), n_power_iters, bound)


def power_iterate(W: np.ndarray, state: SnState, n_iters: int | None = None) -> tuple[float, SnState]:
    """Refine the top singular pair of ``W``; returns (σ̂, new state).

    σ̂ = uᵀ W v never exceeds the true largest singular value. A zero matrix
    yields σ̂ = 0 and leaves the vectors untouched.
    """
    W = np.asarray(W, dtype=np.float64)
    n = state.n_power_iters if n_iters is None else n_iters
    u, v = state.u.astype(np.float64), state.v.astype(np.float64)
    if not np.any(W):
        return 0.0, SnState(state.u, state.v, state.n_power_iters, state.bound, 0.0)
    for _ in range(n):
        wu = W @ v
        nu = np.linalg.norm(wu)
        if nu == 0.0:
            # v fell into the null space; restart from the row space
            v = W.T @ np.ones(W.shape[0])
            v = v / np.linalg.norm(v)
            wu = W @ v
            nu = np.linalg.norm(wu)
        u = wu / nu
        wv = W.T @ u
        v = wv / np.linalg.norm(wv)
    sigma = float(u @ W @ v)
    return sigma, SnState(u, v, state.n_power_iters, state.bound, sigma)


def power_iterate_to_tol(
    W: np.ndarray, state: SnState, rtol: float = 1e-12, max_iters: int = 10_000
) -> tuple[float, SnState, int]:
    """Power-iterate until σ̂ changes by less than ``rtol`` (relative) in one step.

    Returns (σ̂, state, iterations used). Matrices whose top two singular
    values nearly coincide converge slowly, hence the large default budget.
    """
    sigma, state = power_iterate(W, state, 1)
    for it in range(2, max_iters + 1):
        new, state = power_iterate(W, state, 1)
        if abs(new - sigma) <= rtol * abs(new):
            return new, state, it
        sigma = new
    return sigma, state, max_iters


def sn_factor(sigma: float, bound: float) -> float:
    return 1.0 if sigma <= bound else bound / sigma


def apply_sn(W, state: SnState):
    """Scale ``W`` by min(1, c/σ̂) using the state's stored σ̂.

    Accepts an array (returns an array) or a Tensor (returns a Tensor whose
    gradient treats the factor as a constant).
    """
    f = sn_factor(state.sigma, state.bound)
    if isinstance(W, Tensor):
        return W if f == 1.0 else scale(W, f)
    return np.asarray(W) * f


def normalize(W: np.ndarray, state: SnState, n_iters: int | None = None) -> tuple[np.ndarray, SnState]:
    """Power-iterate then project: the array-level composition of both steps."""
    _, st = power_iterate(W, state, n_iters)
    return apply_sn(W, st), st


def spectral_norm(W: np.ndarray) -> float:
    """Largest singular value from the eigenvalues of WᵀW."""
    W = np.asarray(W, dtype=np.float64)
    small = W.T @ W if W.shape[1] <= W.shape[0] else W @ W.T
    return float(np.sqrt(max(np.linalg.eigvalsh(small)[-1], 0.0)))
