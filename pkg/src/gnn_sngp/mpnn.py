"""Message passing feature extractors.

``baseline``: h ← GRU(h, m) with m_v = Σ_w W₁[h_v ‖ h_w ‖ e_vw].
``residual_sn``: the message matrix is spectrally normalized and the update
gains a skip connection, h ← GRU(h, m) + h.

Both read out R = Σ_v σ(W₂[h_v ‖ h_v⁰]) ⊙ (W₃ h_v).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graphdata import LabeledGraph
from .numcore import (
    DTYPES,
    ParamStore,
    ShapeError,
    Tensor,
    add,
    concat,
    gather_rows,
    gru_cell,
    init_gru,
    matmul,
    mul,
    segment_sum,
    sigmoid,
)
from .specnorm import SnState, apply_sn

VARIANTS = ("baseline", "residual_sn")


@dataclass(frozen=True)
class MpnnConfig:
    d_node: int
    d_edge: int
    hidden_dim: int = 64
    n_steps: int = 3
    variant: str = "baseline"
    sn_bound: float = 1.0
    readout_dim: int = 64

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.hidden_dim < 1 or self.n_steps < 1 or self.readout_dim < 1:
            raise ValueError("hidden_dim, n_steps and readout_dim must be >= 1")
        if self.sn_bound <= 0:
            raise ValueError("sn_bound must be positive")
        if self.d_node < 1 or self.d_edge < 0:
            raise ValueError("bad feature widths")


@dataclass
class GraphBatch:
    """Several graphs packed into one disjoint union."""

    ids: list[str]
    node_features: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    edge_features: np.ndarray
    graph_index: np.ndarray
    labels: np.ndarray

    @property
    def n_graphs(self) -> int:
        return len(self.ids)

    @classmethod
    def from_graphs(cls, graphs: Sequence[LabeledGraph], dtype: str = "float64", d_edge: int | None = None):
        if not graphs:
            raise ValueError("empty batch")
        dt = DTYPES[dtype]
        if d_edge is None:
            d_edge = max(g.d_edge for g in graphs)
        offs = np.cumsum([0] + [g.n_nodes for g in graphs])
        src, dst, ef = [], [], []
        for g, off in zip(graphs, offs):
            if g.n_edges:
                if g.d_edge != d_edge:
                    raise ShapeError(f"graph {g.id!r}: edge width {g.d_edge} != {d_edge}")
                src.append(g.edge_index[:, 0] + off)
                dst.append(g.edge_index[:, 1] + off)
                ef.append(g.edge_features)
        return cls(
            ids=[g.id for g in graphs],
            node_features=np.concatenate([g.node_features for g in graphs]).astype(dt),
            src=np.concatenate(src) if src else np.zeros(0, np.int64),
            dst=np.concatenate(dst) if dst else np.zeros(0, np.int64),
            edge_features=(np.concatenate(ef) if ef else np.zeros((0, d_edge))).astype(dt),
            graph_index=np.repeat(np.arange(len(graphs)), [g.n_nodes for g in graphs]),
            labels=np.array([g.label for g in graphs], dtype=np.int64),
        )


@dataclass
class GraphEmbedding:
    vector: np.ndarray  # R, [readout_dim]
    node_states: np.ndarray  # final h_v, [n_nodes, hidden_dim]


def _glorot(rng, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, (fan_in, fan_out))


def init_mpnn(store: ParamStore, cfg: MpnnConfig, rng: np.random.Generator) -> None:
    d = cfg.hidden_dim
    store.add("embed/W", _glorot(rng, cfg.d_node, d))
    store.add("msg/W", _glorot(rng, 2 * d + cfg.d_edge, d))
    init_gru(store, "gru", d, rng)
    store.add("readout/W_gate", _glorot(rng, 2 * d, cfg.readout_dim))
    store.add("readout/W_proj", _glorot(rng, d, cfg.readout_dim))


def message_weight(store: ParamStore, cfg: MpnnConfig, sn: SnState | None) -> Tensor:
    W = store["msg/W"]
    if cfg.variant == "residual_sn":
        if sn is None:
            raise ValueError("residual_sn variant needs a spectral-norm state")
        return apply_sn(W, sn)
    return W


def embed_batch(
    batch: GraphBatch, store: ParamStore, cfg: MpnnConfig, sn: SnState | None = None
) -> tuple[Tensor, Tensor]:
    """Returns (R [n_graphs, readout_dim], final node states [n_nodes, d])."""
    if batch.node_features.shape[1] != cfg.d_node:
        raise ShapeError(f"node width {batch.node_features.shape[1]} != {cfg.d_node}")
    if batch.src.size and batch.edge_features.shape[1] != cfg.d_edge:
        raise ShapeError(f"edge width {batch.edge_features.shape[1]} != {cfg.d_edge}")
    n = batch.node_features.shape[0]
    h0 = matmul(Tensor(batch.node_features), store["embed/W"])
    W1 = message_weight(store, cfg, sn)
    e = Tensor(batch.edge_features)
    h = h0
    for _ in range(cfg.n_steps):
        if batch.src.size:
            # edge (w -> v): v receives W1 [h_v || h_w || e_vw]
            x = concat([gather_rows(h, batch.dst), gather_rows(h, batch.src), e])
            m = segment_sum(matmul(x, W1), batch.dst, n)
        else:
            m = Tensor(np.zeros_like(h.data))
        h_new = gru_cell(h, m, store)
        h = add(h_new, h) if cfg.variant == "residual_sn" else h_new
    gate = sigmoid(matmul(concat([h, h0]), store["readout/W_gate"]))
    proj = matmul(h, store["readout/W_proj"])
    R = segment_sum(mul(gate, proj), batch.graph_index, batch.n_graphs)
    return R, h


def embed_graph(
    g: LabeledGraph, store: ParamStore, cfg: MpnnConfig, sn: SnState | None = None
) -> GraphEmbedding:
    batch = GraphBatch.from_graphs([g], store.dtype, d_edge=cfg.d_edge)
    R, h = embed_batch(batch, store, cfg, sn)
    return GraphEmbedding(R.data[0].copy(), h.data.copy())


def init_dense_head(store: ParamStore, in_dim: int, rng: np.random.Generator) -> None:
    store.add("head/W", _glorot(rng, in_dim, 2))
    store.add("head/b", np.zeros(2))


def predict_logits_dense(R: Tensor, store: ParamStore) -> Tensor:
    W = store["head/W"]
    if R.data.ndim != 2 or R.shape[1] != W.shape[0]:
        raise ShapeError(f"dense head expects width {W.shape[0]}, got {R.shape}")
    return add(matmul(R, W), store["head/b"])
