"""The three end-to-end architectures and their checkpoint round-trip.

gnn_baseline  MPNN + dense logits
gnn_gp        MPNN + random-feature GP head
gnn_sngp      residual, spectrally normalized MPNN + random-feature GP head
"""
from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import gp_head
from .graphdata import LabeledGraph
from .mpnn import GraphBatch, MpnnConfig, embed_batch, init_dense_head, init_mpnn, predict_logits_dense
from .numcore import (
    ParamStore,
    Tensor,
    decode_checkpoint,
    encode_checkpoint,
    make_rng,
    softmax,
    softmax_cross_entropy,
)
from .numcore.rng import STREAM_INIT, STREAM_RFF, STREAM_SN
from .specnorm import EVAL_POWER_ITERS, SnState, power_iterate

MODEL_VARIANTS = ("gnn_baseline", "gnn_gp", "gnn_sngp")
PREDICT_CHUNK = 256


@dataclass(frozen=True)
class ModelConfig:
    variant: str
    d_node: int
    d_edge: int
    hidden_dim: int = 64
    n_steps: int = 3
    readout_dim: int = 64
    sn_bound: float = 1.0
    sn_power_iters: int = 1
    rff_features: int = 1024
    lengthscale: float = 2.0
    ridge: float = 1.0
    dtype: str = "float64"

    def __post_init__(self):
        if self.variant not in MODEL_VARIANTS:
            raise ValueError(f"variant must be one of {MODEL_VARIANTS}")

    @property
    def uses_gp(self) -> bool:
        return self.variant != "gnn_baseline"

    @property
    def mpnn(self) -> MpnnConfig:
        return MpnnConfig(
            d_node=self.d_node,
            d_edge=self.d_edge,
            hidden_dim=self.hidden_dim,
            n_steps=self.n_steps,
            variant="residual_sn" if self.variant == "gnn_sngp" else "baseline",
            sn_bound=self.sn_bound,
            readout_dim=self.readout_dim,
        )


class GnnModel:
    def __init__(self, config: ModelConfig, seed: int):
        self.config = config
        self.seed = int(seed)
        self.store = ParamStore(config.dtype)
        init_mpnn(self.store, config.mpnn, make_rng(seed, STREAM_INIT))
        self.sn: SnState | None = None
        self.rff: gp_head.RffState | None = None
        if config.variant == "gnn_sngp":
            self.sn = SnState.init(
                2 * config.hidden_dim + config.d_edge,
                config.hidden_dim,
                make_rng(seed, STREAM_SN),
                config.sn_power_iters,
                config.sn_bound,
            )
            self.refresh_sn()
        if config.uses_gp:
            self.rff = gp_head.init_rff(
                config.readout_dim, config.rff_features, make_rng(seed, STREAM_RFF), config.lengthscale, config.ridge
            )
            gp_head.init_gp_weights(self.store, self.rff)
        else:
            init_dense_head(self.store, config.readout_dim, make_rng(seed, STREAM_INIT + 100))

    @property
    def tag(self) -> str:
        return self.config.variant

    # -- forward ---------------------------------------------------------

    def batch(self, graphs: Sequence[LabeledGraph]) -> GraphBatch:
        return GraphBatch.from_graphs(graphs, self.config.dtype, d_edge=self.config.d_edge)

    def refresh_sn(self, n_iters: int | None = None) -> None:
        if self.sn is not None:
            _, self.sn = power_iterate(self.store["msg/W"].data, self.sn, n_iters)

    def embed_tensor(self, batch: GraphBatch) -> Tensor:
        R, _ = embed_batch(batch, self.store, self.config.mpnn, self.sn)
        return R

    def logits(self, batch: GraphBatch) -> Tensor:
        R = self.embed_tensor(batch)
        if self.config.uses_gp:
            return gp_head.gp_logits(gp_head.rff_features(R, self.rff), self.store)
        return predict_logits_dense(R, self.store)

    def loss(self, batch: GraphBatch) -> Tensor:
        return softmax_cross_entropy(self.logits(batch), batch.labels)

    # -- inference ---------------------------------------------------------

    def embed(self, graphs: Sequence[LabeledGraph]) -> np.ndarray:
        out = [
            self.embed_tensor(self.batch(graphs[i : i + PREDICT_CHUNK])).data.astype(np.float64)
            for i in range(0, len(graphs), PREDICT_CHUNK)
        ]
        return np.concatenate(out)

    def fit_laplace(self, graphs: Sequence[LabeledGraph]) -> None:
        """One full pass over training graphs to build the head covariance."""
        if not self.config.uses_gp:
            return
        phi = gp_head.rff_features(self.embed(graphs), self.rff)
        means = phi @ self.store["gp/beta"].data.astype(np.float64)
        p_hat = softmax(means)[:, 1]
        self.rff = gp_head.laplace_fit(phi, p_hat, self.rff)

    def predict(self, graphs: Sequence[LabeledGraph]) -> gp_head.PredictiveOutput:
        R = self.embed(graphs)
        if self.config.uses_gp:
            return gp_head.predict(R, self.rff, self.store["gp/beta"].data)
        W = self.store["head/W"].data.astype(np.float64)
        b = self.store["head/b"].data.astype(np.float64)
        means = R @ W + b
        return gp_head.PredictiveOutput(means, np.zeros(len(R)), softmax(means))

    # -- persistence -------------------------------------------------------

    def to_checkpoint(self) -> bytes:
        arrays = {f"param/{k}": v for k, v in self.store.arrays().items()}
        if self.sn is not None:
            arrays["sn/u"] = self.sn.u
            arrays["sn/v"] = self.sn.v
            arrays["sn/sigma"] = np.array(self.sn.sigma)
        if self.rff is not None:
            arrays["rff/omega"] = self.rff.omega
            arrays["rff/bias"] = self.rff.bias
            if self.rff.covariance is not None:
                arrays["rff/precision"] = self.rff.precision
                arrays["rff/covariance"] = self.rff.covariance
        meta = {"model": asdict(self.config), "seed": self.seed}
        return encode_checkpoint(arrays, meta)

    @classmethod
    def from_checkpoint(cls, buf: bytes) -> "GnnModel":
        arrays, meta = decode_checkpoint(buf)
        model = cls(ModelConfig(**meta["model"]), meta["seed"])
        model.store.load_arrays({k[len("param/"):]: v for k, v in arrays.items() if k.startswith("param/")})
        if model.sn is not None:
            model.sn = SnState(
                arrays["sn/u"], arrays["sn/v"], model.sn.n_power_iters, model.sn.bound, float(arrays["sn/sigma"])
            )
        if model.rff is not None:
            model.rff = gp_head.RffState(
                arrays["rff/omega"],
                arrays["rff/bias"],
                model.rff.lengthscale,
                model.rff.ridge,
                arrays.get("rff/precision"),
                arrays.get("rff/covariance"),
            )
        return model


def checkpoint_hash(buf: bytes) -> str:
    return hashlib.sha256(buf).hexdigest()


def finalize_sn(model: GnnModel) -> None:
    """Evaluation-grade σ̂ for the message layer (50 power iterations)."""
    model.refresh_sn(EVAL_POWER_ITERS)
