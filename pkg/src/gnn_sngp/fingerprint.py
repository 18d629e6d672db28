"""Circular fingerprints on labeled graphs and Tanimoto-distance splits.

Feature rows are hashed through their exact ``repr`` float text, so two rows
only collide when every value is identical. Quantize real-valued features
before fingerprinting if near-equal rows should match.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import xxhash

from .graphdata import Dataset, LabeledGraph

HASH_SEED = 0x5EED_F1A9_2048_0001
DEFAULT_RADIUS = 2
DEFAULT_WIDTH = 2048
DEFAULT_THRESHOLD = 0.7
DEFAULT_K = 8


def _h(data: bytes) -> int:
    return xxhash.xxh64_intdigest(data, seed=HASH_SEED)


def _row_bytes(tag: bytes, row) -> bytes:
    return tag + ",".join(repr(float(x)) for x in row).encode("ascii")


@dataclass(frozen=True, eq=False)
class Fingerprint:
    bits: np.ndarray  # bool [width]
    radius: int = DEFAULT_RADIUS

    @property
    def width(self) -> int:
        return self.bits.size

    @property
    def on_bits(self) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.bits).tolist())

    def __eq__(self, other):
        if not isinstance(other, Fingerprint):
            return NotImplemented
        return self.radius == other.radius and np.array_equal(self.bits, other.bits)

    __hash__ = None

    @classmethod
    def from_bits(cls, on: Sequence[int], width: int = DEFAULT_WIDTH, radius: int = 0):
        bits = np.zeros(width, dtype=bool)
        bits[list(on)] = True
        return cls(bits, radius)


def compute_fingerprint(
    g: LabeledGraph, radius: int = DEFAULT_RADIUS, width: int = DEFAULT_WIDTH
) -> Fingerprint:
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if width < 1 or width & (width - 1):
        raise ValueError("width must be a power of two")
    node_h = [_h(_row_bytes(b"n", row)) for row in g.node_features]
    edge_h = [_h(_row_bytes(b"e", row)) for row in g.edge_features]
    out: list[list[tuple[int, int]]] = [[] for _ in range(g.n_nodes)]
    for k, (s, d) in enumerate(g.edge_index.tolist()):
        out[s].append((k, d))

    bits = np.zeros(width, dtype=bool)
    for h in node_h:
        bits[h % width] = True
    for r in range(1, radius + 1):
        new_h = []
        for v in range(g.n_nodes):
            env = sorted((edge_h[k], node_h[w]) for k, w in out[v])
            payload = struct.pack("<QQ", r, node_h[v]) + b"".join(
                struct.pack("<QQ", a, b) for a, b in env
            )
            new_h.append(_h(payload))
        node_h = new_h
        for h in node_h:
            bits[h % width] = True
    return Fingerprint(bits, radius)


def tanimoto_distance(a: Fingerprint, b: Fingerprint) -> float:
    if a.width != b.width:
        raise ValueError(f"fingerprint widths differ: {a.width} vs {b.width}")
    union = np.count_nonzero(a.bits | b.bits)
    if union == 0:
        return 0.0
    return 1.0 - np.count_nonzero(a.bits & b.bits) / union


def fingerprint_matrix(fps: Sequence[Fingerprint]) -> np.ndarray:
    return np.stack([f.bits for f in fps])


def tanimoto_matrix(a_bits: np.ndarray, b_bits: np.ndarray) -> np.ndarray:
    """Pairwise Tanimoto distances between rows of two boolean bit matrices."""
    a = a_bits.astype(np.float64)
    b = b_bits.astype(np.float64)
    inter = a @ b.T
    union = a.sum(1)[:, None] + b.sum(1)[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        sim = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 1.0)
    return 1.0 - sim


def _knn_mean(dist_row: np.ndarray, train_ids: np.ndarray, k: int) -> float:
    # stable order by (distance, training id)
    order = np.lexsort((train_ids, dist_row))
    return float(dist_row[order[: min(k, dist_row.size)]].mean())


class TrainIndex:
    """Fingerprints of a training set, reusable across many queries."""

    def __init__(self, train: Dataset, radius: int = DEFAULT_RADIUS, width: int = DEFAULT_WIDTH):
        self.radius = radius
        self.width = width
        self.ids = np.array(train.ids)
        self.bits = fingerprint_matrix([compute_fingerprint(g, radius, width) for g in train])

    def distances(self, graphs: Sequence[LabeledGraph] | Dataset, k: int = DEFAULT_K) -> np.ndarray:
        if k < 1:
            raise ValueError("k must be >= 1")
        q = fingerprint_matrix([compute_fingerprint(g, self.radius, self.width) for g in graphs])
        out = np.empty(len(q))
        for start in range(0, len(q), 256):
            block = tanimoto_matrix(q[start : start + 256], self.bits)
            for j, row in enumerate(block):
                out[start + j] = _knn_mean(row, self.ids, k)
        return out


def distance_to_train(
    g: LabeledGraph,
    train: Dataset | TrainIndex,
    k: int = DEFAULT_K,
    radius: int = DEFAULT_RADIUS,
    width: int = DEFAULT_WIDTH,
) -> float:
    index = train if isinstance(train, TrainIndex) else TrainIndex(train, radius, width)
    return float(index.distances([g], k)[0])


@dataclass(frozen=True)
class DistanceSplit:
    close_ids: frozenset[str]
    far_ids: frozenset[str]
    distances: dict[str, float]
    threshold: float = DEFAULT_THRESHOLD
    k_neighbors: int = DEFAULT_K

    def is_far(self, ids: Sequence[str]) -> np.ndarray:
        missing = [i for i in ids if i not in self.distances]
        if missing:
            raise KeyError(f"ids not in split: {missing[:5]}")
        return np.array([i in self.far_ids for i in ids], dtype=bool)

    def to_json(self, order: Sequence[str] | None = None) -> dict:
        order = list(order) if order is not None else sorted(self.distances)
        return {
            "close": [i for i in order if i in self.close_ids],
            "far": [i for i in order if i in self.far_ids],
            "distances": {i: self.distances[i] for i in order},
        }

    @classmethod
    def from_json(cls, obj: dict, threshold: float = DEFAULT_THRESHOLD, k: int = DEFAULT_K):
        close, far = frozenset(obj["close"]), frozenset(obj["far"])
        dist = {str(i): float(d) for i, d in obj["distances"].items()}
        if close & far or (close | far) != set(dist):
            raise ValueError("split file is not a partition of its distance ids")
        return cls(close, far, dist, threshold, k)


def split_by_distance(
    test: Dataset,
    train: Dataset | TrainIndex,
    threshold: float = DEFAULT_THRESHOLD,
    k: int = DEFAULT_K,
    radius: int = DEFAULT_RADIUS,
    width: int = DEFAULT_WIDTH,
) -> DistanceSplit:
    index = train if isinstance(train, TrainIndex) else TrainIndex(train, radius, width)
    dist = index.distances(test, k)
    close, far = set(), set()
    for gid, d in zip(test.ids, dist):
        (close if d < threshold else far).add(gid)
    return DistanceSplit(
        frozenset(close),
        frozenset(far),
        {gid: float(d) for gid, d in zip(test.ids, dist)},
        threshold,
        k,
    )
