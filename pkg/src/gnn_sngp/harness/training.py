from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..graphdata import LabeledGraph
from ..models import GnnModel, ModelConfig, finalize_sn
from ..numcore import NonFiniteError, adam_step, make_rng
from ..numcore.rng import STREAM_SHUFFLE

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class OptimConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    n_epochs: int = 100
    batch_size: int = 32


@dataclass
class TrainLog:
    seed: int
    epoch_loss: list[float] = field(default_factory=list)
    final_epoch_order: list[str] = field(default_factory=list)
    train_accuracy: float = float("nan")

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "epoch_loss": self.epoch_loss,
            "final_epoch_order": self.final_epoch_order,
            "train_accuracy": self.train_accuracy,
        }


def train_model(
    config: ModelConfig,
    graphs: Sequence[LabeledGraph],
    seed: int,
    optim: OptimConfig | None = None,
) -> tuple[GnnModel, TrainLog]:
    """Minibatch Adam on softmax cross-entropy, then SN refresh and Laplace fit."""
    optim = optim or OptimConfig()
    graphs = list(graphs)
    if not graphs:
        raise TrainingError("empty training set")
    model = GnnModel(config, seed)
    rng = make_rng(seed, STREAM_SHUFFLE)
    tlog = TrainLog(seed)
    n = len(graphs)
    for epoch in range(optim.n_epochs):
        order = rng.permutation(n)
        total = 0.0
        for bi, start in enumerate(range(0, n, optim.batch_size)):
            idx = order[start : start + optim.batch_size]
            batch = model.batch([graphs[i] for i in idx])
            model.refresh_sn()
            model.store.zero_grad()
            try:
                loss = model.loss(batch)
            except NonFiniteError as exc:
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {bi} (seed {seed})") from exc
            loss.backward()
            adam_step(model.store, optim.lr, optim.beta1, optim.beta2, optim.eps)
            total += float(loss.data) * len(idx)
        tlog.epoch_loss.append(total / n)
        log.debug("seed %d epoch %d loss %.5f", seed, epoch, total / n)
        if epoch == optim.n_epochs - 1:
            tlog.final_epoch_order = [graphs[i].id for i in order]
    model.store.zero_grad()
    finalize_sn(model)
    model.fit_laplace(graphs)
    pred = model.predict(graphs).probs.argmax(axis=1)
    tlog.train_accuracy = float((pred == np.array([g.label for g in graphs])).mean())
    return model, tlog
