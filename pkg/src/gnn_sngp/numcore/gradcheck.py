from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .params import ParamStore
from .tensor import Tensor

# gradients smaller than this are compared in absolute terms
REL_FLOOR = 1e-6


@dataclass
class GradcheckReport:
    errors: dict[str, float]
    n_checked: int

    @property
    def worst(self) -> tuple[str, float]:
        name = max(self.errors, key=self.errors.get)
        return name, self.errors[name]

    @property
    def max_error(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), REL_FLOOR)
    return np.abs(analytic - numeric) / denom


def gradcheck(
    closure: Callable[[], Tensor],
    store: ParamStore,
    eps: float = 1e-5,
    names: list[str] | None = None,
) -> GradcheckReport:
    """Compare backprop gradients of ``closure()`` with central differences.

    ``closure`` must rebuild the scalar loss from the current parameter values
    and be deterministic. Every entry of every selected parameter is perturbed.
    """
    if store.dtype != "float64":
        raise ValueError("gradcheck needs a float64 parameter store")
    store.zero_grad()
    closure().backward()
    analytic = {k: store.grad(k).copy() for k in store}
    errors, n = {}, 0
    for name in names or store.names():
        p = store[name]
        numeric = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = closure().data.item()
            flat[i] = orig - eps
            down = closure().data.item()
            flat[i] = orig
            numeric.flat[i] = (up - down) / (2 * eps)
        n += flat.size
        errors[name] = float(relative_error(analytic[name], numeric).max()) if flat.size else 0.0
    store.zero_grad()
    return GradcheckReport(errors, n)
