"""Frozen-feature ablation: feature sources × {dense, gp, gpc} heads × test sets."""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit

from .. import exact_gpc, gp_head, metrics
from ..fingerprint import DEFAULT_RADIUS, DEFAULT_WIDTH, DistanceSplit, compute_fingerprint
from ..graphdata import Dataset
from ..numcore import ParamStore, adam_step, make_rng, softmax, softmax_cross_entropy
from ..numcore.rng import STREAM_RFF, STREAM_SHUFFLE

log = logging.getLogger(__name__)

HEADS = ("dense", "gp", "gpc")
DENSE_L2 = 1e-2
VAL_EVERY = 5


@dataclass
class EmbeddingMatrix:
    model: str
    checkpoint_hash: str
    ids: list[str]
    vectors: np.ndarray  # [n, dim]

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64).reshape(len(self.ids), -1)
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("duplicate ids in embedding matrix")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def rows(self, ids: Sequence[str]) -> np.ndarray:
        pos = {i: k for k, i in enumerate(self.ids)}
        missing = [i for i in ids if i not in pos]
        if missing:
            raise KeyError(f"{self.model}: {len(missing)} ids have no embedding, e.g. {missing[:3]}")
        return self.vectors[[pos[i] for i in ids]]

    def dumps(self) -> str:
        return json.dumps(
            {
                "model": self.model,
                "checkpoint_hash": self.checkpoint_hash,
                "dim": self.dim,
                "rows": [{"id": i, "vector": [float(x) for x in v]} for i, v in zip(self.ids, self.vectors)],
            },
            sort_keys=True,
            separators=(",", ":"),
        )

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.dumps())
            fh.write("\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "EmbeddingMatrix":
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        rows = obj["rows"]
        vec = np.array([r["vector"] for r in rows], dtype=np.float64).reshape(len(rows), obj["dim"])
        return cls(obj["model"], obj["checkpoint_hash"], [r["id"] for r in rows], vec)


def fingerprint_embeddings(datasets: Sequence[Dataset], radius=DEFAULT_RADIUS, width=DEFAULT_WIDTH) -> EmbeddingMatrix:
    """Raw fingerprint bits as 0/1 feature rows (the 'fp' feature source)."""
    ids, rows = [], []
    for ds in datasets:
        for g in ds:
            ids.append(g.id)
            rows.append(compute_fingerprint(g, radius, width).bits.astype(np.float64))
    return EmbeddingMatrix("fp", f"fp-r{radius}-w{width}", ids, np.array(rows))


# --- heads ------------------------------------------------------------------


def _median_distance(X: np.ndarray, max_rows: int = 500) -> float:
    Z = X[:max_rows]
    sq = (Z * Z).sum(1)[:, None] + (Z * Z).sum(1)[None, :] - 2 * Z @ Z.T
    d = np.sqrt(np.maximum(sq[np.triu_indices(len(Z), 1)], 0.0))
    med = float(np.median(d)) if d.size else 1.0
    return med if med > 0 else 1.0


class DenseHead:
    """L2-regularized logistic regression fit by Newton's method (deterministic)."""

    def __init__(self, l2: float = DENSE_L2, max_iter: int = 100, tol: float = 1e-10):
        self.l2, self.max_iter, self.tol = l2, max_iter, tol

    def fit(self, X, y):
        self.mu = X.mean(0)
        sd = X.std(0)
        self.sd = np.where(sd > 0, sd, 1.0)
        Z = np.hstack([(X - self.mu) / self.sd, np.ones((len(X), 1))])
        reg = self.l2 * len(X) * np.eye(Z.shape[1])
        reg[-1, -1] = 0.0
        w = np.zeros(Z.shape[1])
        for _ in range(self.max_iter):
            p = expit(Z @ w)
            g = Z.T @ (p - y) + reg @ w
            H = (Z * (p * (1 - p))[:, None]).T @ Z + reg + 1e-10 * np.eye(len(w))
            step = np.linalg.solve(H, g)
            w -= step
            if np.abs(step).max() < self.tol:
                break
        self.w = w
        return self

    def predict(self, X) -> gp_head.PredictiveOutput:
        Z = np.hstack([(X - self.mu) / self.sd, np.ones((len(X), 1))])
        f = Z @ self.w
        p1 = expit(f)
        return gp_head.PredictiveOutput(
            np.stack([np.zeros_like(f), f], 1), np.zeros(len(f)), np.stack([1 - p1, p1], 1)
        )


class GpLayerHead:
    """Random-feature GP head on frozen features; Ω, b depend on the seed."""

    def __init__(self, seed: int, n_features: int = 1024, lengthscale: float = 1.0, epochs: int = 300, lr: float = 0.05):
        self.seed, self.n_features, self.lengthscale = seed, n_features, lengthscale
        self.epochs, self.lr = epochs, lr

    def fit(self, X, y):
        self.scale = _median_distance(X)
        Xs = X / self.scale
        self.state = gp_head.init_rff(X.shape[1], self.n_features, make_rng(self.seed, STREAM_RFF), self.lengthscale)
        phi = gp_head.rff_features(Xs, self.state)
        store = ParamStore()
        gp_head.init_gp_weights(store, self.state)
        rng = make_rng(self.seed, STREAM_SHUFFLE)
        y = np.asarray(y, dtype=np.int64)
        bs = 256
        for _ in range(self.epochs):
            order = rng.permutation(len(y))
            for s in range(0, len(y), bs):
                idx = order[s : s + bs]
                store.zero_grad()
                loss = softmax_cross_entropy(gp_head.gp_logits(phi[idx], store), y[idx])
                loss.backward()
                adam_step(store, self.lr)
        self.beta = store["gp/beta"].data.copy()
        p_hat = softmax(phi @ self.beta)[:, 1]
        self.state = gp_head.laplace_fit(phi, p_hat, self.state)
        return self

    def predict(self, X) -> gp_head.PredictiveOutput:
        return gp_head.predict(X / self.scale, self.state, self.beta)


class GpcHead:
    """Exact GPC; (a, ℓ) chosen on a fixed held-out slice of the training rows."""

    def fit(self, X, y):
        self.scale = _median_distance(X)
        Xs = X / self.scale
        val = np.zeros(len(y), dtype=bool)
        val[::VAL_EVERY] = True
        if len(np.unique(y[~val])) < 2 or len(np.unique(y[val])) < 2:
            self.amplitude, self.lengthscale = 1.0, 1.0
        else:
            self.amplitude, self.lengthscale = exact_gpc.select_gpc(Xs[~val], y[~val], Xs[val], y[val])
        self.model = exact_gpc.gpc_fit(Xs, y, self.amplitude, self.lengthscale)
        return self

    def predict(self, X) -> gp_head.PredictiveOutput:
        return exact_gpc.gpc_predict(self.model, X / self.scale)


# --- grid ---------------------------------------------------------------------


@dataclass
class AblationRow:
    features: str
    head: str
    testset: str
    report: metrics.EvalReport

    def to_json(self) -> dict:
        return {"features": self.features, "head": self.head, "testset": self.testset, **self.report.to_json()}


def ablate(
    sources: Sequence[EmbeddingMatrix],
    train: Dataset,
    tests: dict[str, tuple[Dataset, DistanceSplit | None]],
    heads: Sequence[str] = HEADS,
    seeds: Sequence[int] = (0, 1, 2),
) -> list[AblationRow]:
    """Train each head on each frozen feature source; evaluate on every test set.

    Dense and GPC heads are deterministic, so all their per-seed values are
    identical; the GP-layer head redraws its random features per seed.
    """
    bad = set(heads) - set(HEADS)
    if bad:
        raise ValueError(f"unknown heads {sorted(bad)}")
    y = train.labels
    if len(np.unique(y)) < 2:
        raise ValueError("ablation needs both classes in the training data")
    rows = []
    for src in sources:
        X = src.rows(train.ids)
        test_X = {t: src.rows(ds.ids) for t, (ds, _) in tests.items()}
        for head in heads:
            log.info("ablation: %s + %s", src.model, head)
            if head == "gpc":
                fitted = [GpcHead().fit(X, y)] * len(seeds)
            elif head == "dense":
                fitted = [DenseHead().fit(X, y) for _ in seeds]
            else:
                fitted = [GpLayerHead(s).fit(X, y) for s in seeds]
            for tag, (ds, split) in tests.items():
                far = split.is_far(ds.ids) if split is not None else None
                runs = []
                for f in fitted:
                    out = f.predict(test_X[tag])
                    vals, flags = metrics.compute_all(out.probs, ds.labels, far)
                    if far is not None and far.any():
                        vals["mean_uncertainty_far"] = float(out.uncertainty[far].mean())
                    vals["mean_uncertainty"] = float(out.uncertainty.mean())
                    runs.append((vals, flags))
                rep = metrics.EvalReport.from_runs(f"{src.model}+{head}", tag, list(seeds), runs)
                for extra in ("mean_uncertainty_far", "mean_uncertainty"):
                    if all(extra in r[0] for r in runs):
                        rep.per_seed[extra] = [r[0][extra] for r in runs]
                rows.append(AblationRow(src.model, head, tag, rep))
    return rows


def ablation_table(rows: Sequence[AblationRow]) -> dict:
    return {"rows": [r.to_json() for r in rows]}
