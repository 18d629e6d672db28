from __future__ import annotations

import numpy as np

from .params import ParamStore
from .tensor import Tensor, add, matmul, mul, sigmoid, sub, tanh

GATES = ("z", "r", "h")


def init_gru(store: ParamStore, prefix: str, d: int, rng: np.random.Generator) -> None:
    bound = 1.0 / np.sqrt(d)
    for g in GATES:
        store.add(f"{prefix}/W_{g}", rng.uniform(-bound, bound, (d, d)))
        store.add(f"{prefix}/U_{g}", rng.uniform(-bound, bound, (d, d)))
        store.add(f"{prefix}/b_{g}", np.zeros(d))


def gru_cell(h: Tensor, m: Tensor, store: ParamStore, prefix: str = "gru") -> Tensor:
    """One GRU update of state rows ``h`` from input rows ``m``.

    z = σ(m W_z + h U_z + b_z), r = σ(m W_r + h U_r + b_r),
    h̃ = tanh(m W_h + (r ⊙ h) U_h + b_h), h' = (1 − z) ⊙ h + z ⊙ h̃.
    """
    p = lambda n: store[f"{prefix}/{n}"]  # noqa: E731
    z = sigmoid(add(add(matmul(m, p("W_z")), matmul(h, p("U_z"))), p("b_z")))
    r = sigmoid(add(add(matmul(m, p("W_r")), matmul(h, p("U_r"))), p("b_r")))
    cand = tanh(add(add(matmul(m, p("W_h")), matmul(mul(r, h), p("U_h"))), p("b_h")))
    # (1 - z) h + z cand == h + z (cand - h)
    return add(h, mul(z, sub(cand, h)))
