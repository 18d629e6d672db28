"""Labeled graphs, JSONL dataset files, and a synthetic motif-toxicity benchmark.

A graph record on disk is one JSON object per line::

    {"edges": [[0, 1, [1.0, 0.0]], [1, 0, [1.0, 0.0]]], "id": "g0", "label": 1,
     "nodes": [[1.0, 0.0], [0.0, 1.0]]}

Undirected graphs are stored as symmetric pairs of directed edges.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

SPLIT_TAGS = ("train", "test-iid", "test-ood1", "test-ood2", "custom")


class DatasetFormatError(ValueError):
    """Raised for malformed or inconsistent dataset files."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class DatasetIndexError(DatasetFormatError, IndexError):
    """An edge refers to a node index outside the graph."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LabeledGraph:
    id: str
    node_features: np.ndarray  # [n_nodes, d_node]
    edge_index: np.ndarray  # [n_edges, 2] rows of (src, dst)
    edge_features: np.ndarray  # [n_edges, d_edge]
    label: int

    def __post_init__(self):
        nf = np.array(self.node_features, dtype=np.float64, copy=True)
        if nf.ndim != 2 or nf.shape[0] < 1:
            raise ValueError(f"graph {self.id!r}: need at least one node row")
        ei = np.array(self.edge_index, dtype=np.int64, copy=True).reshape(-1, 2)
        ef = np.array(self.edge_features, dtype=np.float64, copy=True)
        if ef.size == 0:
            ef = ef.reshape(len(ei), ef.shape[1] if ef.ndim == 2 else 0)
        if ef.ndim != 2 or len(ef) != len(ei):
            raise ValueError(f"graph {self.id!r}: edge features do not match edge list")
        n = nf.shape[0]
        if len(ei) and (ei.min() < 0 or ei.max() >= n):
            bad = ei[(ei < 0).any(axis=1) | (ei >= n).any(axis=1)][0]
            raise IndexError(
                f"graph {self.id!r}: edge ({bad[0]}, {bad[1]}) out of range for {n} nodes"
            )
        if self.label not in (0, 1):
            raise ValueError(f"graph {self.id!r}: label must be 0 or 1, got {self.label!r}")
        if not np.isfinite(nf).all() or not np.isfinite(ef).all():
            raise ValueError(f"graph {self.id!r}: non-finite feature value")
        _check_symmetric(self.id, ei, ef)
        object.__setattr__(self, "node_features", _frozen(nf))
        object.__setattr__(self, "edge_index", _frozen(ei))
        object.__setattr__(self, "edge_features", _frozen(ef))
        object.__setattr__(self, "label", int(self.label))

    @property
    def n_nodes(self) -> int:
        return self.node_features.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edge_index.shape[0]

    @property
    def d_node(self) -> int:
        return self.node_features.shape[1]

    @property
    def d_edge(self) -> int:
        return self.edge_features.shape[1]

    def __eq__(self, other):
        if not isinstance(other, LabeledGraph):
            return NotImplemented
        return (
            self.id == other.id
            and self.label == other.label
            and np.array_equal(self.node_features, other.node_features)
            and np.array_equal(self.edge_index, other.edge_index)
            # with no edges the edge-feature width carries no information
            and (self.n_edges == 0 or np.array_equal(self.edge_features, other.edge_features))
        )

    __hash__ = None

    def permuted(self, perm: Sequence[int], new_id: str | None = None) -> "LabeledGraph":
        """Relabel nodes so that old node i becomes node perm[i]."""
        perm = np.asarray(perm, dtype=np.int64)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        return LabeledGraph(
            id=self.id if new_id is None else new_id,
            node_features=self.node_features[inv],
            edge_index=perm[self.edge_index] if self.n_edges else self.edge_index,
            edge_features=self.edge_features,
            label=self.label,
        )

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "nodes": [[float(x) for x in row] for row in self.node_features],
            "edges": [
                [int(s), int(d), [float(x) for x in e]]
                for (s, d), e in zip(self.edge_index, self.edge_features)
            ],
            "label": self.label,
        }


def _check_symmetric(gid, ei, ef):
    if not len(ei):
        return
    seen = {}
    for (s, d), e in zip(ei.tolist(), ef.tolist()):
        seen.setdefault((s, d, tuple(e)), 0)
        seen[(s, d, tuple(e))] += 1
    for (s, d, e), count in seen.items():
        if seen.get((d, s, e), 0) != count:
            raise ValueError(f"graph {gid!r}: edge ({s}, {d}) has no matching reverse edge")


@dataclass(frozen=True, eq=False)
class Dataset:
    graphs: tuple[LabeledGraph, ...]
    split_tag: str = "custom"
    d_node: int = field(init=False)
    d_edge: int = field(init=False)

    def __post_init__(self):
        graphs = tuple(self.graphs)
        if not graphs:
            raise ValueError("dataset is empty")
        if self.split_tag not in SPLIT_TAGS:
            raise ValueError(f"unknown split tag {self.split_tag!r}")
        d_node = graphs[0].d_node
        edged = [g.d_edge for g in graphs if g.n_edges]
        d_edge = edged[0] if edged else 0
        ids = set()
        for g in graphs:
            if g.d_node != d_node:
                raise ValueError(f"graph {g.id!r}: node width {g.d_node} != {d_node}")
            if g.n_edges and g.d_edge != d_edge:
                raise ValueError(f"graph {g.id!r}: edge width {g.d_edge} != {d_edge}")
            if g.id in ids:
                raise ValueError(f"duplicate graph id {g.id!r}")
            ids.add(g.id)
        object.__setattr__(self, "graphs", graphs)
        object.__setattr__(self, "d_node", d_node)
        object.__setattr__(self, "d_edge", d_edge)

    def __len__(self):
        return len(self.graphs)

    def __iter__(self):
        return iter(self.graphs)

    def __getitem__(self, i):
        return self.graphs[i]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.split_tag == other.split_tag and self.graphs == other.graphs

    __hash__ = None

    @property
    def ids(self) -> list[str]:
        return [g.id for g in self.graphs]

    @property
    def labels(self) -> np.ndarray:
        return np.array([g.label for g in self.graphs], dtype=np.int64)

    def retagged(self, split_tag: str) -> "Dataset":
        return Dataset(self.graphs, split_tag=split_tag)

    def by_id(self) -> dict[str, LabeledGraph]:
        return {g.id: g for g in self.graphs}


def _graph_from_record(rec, lineno: int) -> LabeledGraph:
    if not isinstance(rec, dict):
        raise DatasetFormatError("record is not a JSON object", lineno)
    missing = {"id", "nodes", "edges", "label"} - rec.keys()
    if missing:
        raise DatasetFormatError(f"missing keys {sorted(missing)}", lineno)
    extra = rec.keys() - {"id", "nodes", "edges", "label"}
    if extra:
        raise DatasetFormatError(f"unknown keys {sorted(extra)}", lineno)
    nodes = rec["nodes"]
    if not isinstance(nodes, list) or not nodes or not all(isinstance(r, list) for r in nodes):
        raise DatasetFormatError("'nodes' must be a non-empty list of feature rows", lineno)
    if len({len(r) for r in nodes}) != 1:
        raise DatasetFormatError("node feature rows have inconsistent widths", lineno)
    edges = rec["edges"]
    if not isinstance(edges, list):
        raise DatasetFormatError("'edges' must be a list", lineno)
    src, dst, efeat = [], [], []
    for e in edges:
        if (
            not isinstance(e, list)
            or len(e) != 3
            or not all(isinstance(i, int) and not isinstance(i, bool) for i in e[:2])
            or not isinstance(e[2], list)
        ):
            raise DatasetFormatError(f"malformed edge {e!r}", lineno)
        src.append(e[0])
        dst.append(e[1])
        efeat.append(e[2])
    if len({len(f) for f in efeat}) > 1:
        raise DatasetFormatError("edge feature rows have inconsistent widths", lineno)
    label = rec["label"]
    if isinstance(label, bool) or label not in (0, 1):
        raise DatasetFormatError(f"label must be 0 or 1, got {label!r}", lineno)
    if not isinstance(rec["id"], str):
        raise DatasetFormatError("'id' must be a string", lineno)
    d_edge = len(efeat[0]) if efeat else 0
    try:
        return LabeledGraph(
            id=rec["id"],
            node_features=np.array(nodes, dtype=np.float64),
            edge_index=np.array(list(zip(src, dst)), dtype=np.int64).reshape(-1, 2),
            edge_features=np.array(efeat, dtype=np.float64).reshape(len(efeat), d_edge),
            label=label,
        )
    except IndexError as exc:
        raise DatasetIndexError(str(exc), lineno) from exc
    except (ValueError, TypeError) as exc:
        raise DatasetFormatError(str(exc), lineno) from exc


def load_dataset(path: str | os.PathLike, split_tag: str = "custom") -> Dataset:
    graphs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"invalid JSON ({exc.msg})", lineno) from exc
            g = _graph_from_record(rec, lineno)
            if graphs:
                ref = graphs[0]
                if g.d_node != ref.d_node:
                    raise DatasetFormatError(
                        f"node width {g.d_node} differs from {ref.d_node}", lineno
                    )
                widths = {h.d_edge for h in graphs if h.n_edges}
                if g.n_edges and widths and g.d_edge not in widths:
                    raise DatasetFormatError(
                        f"edge width {g.d_edge} differs from {widths.pop()}", lineno
                    )
            graphs.append(g)
    if not graphs:
        raise DatasetFormatError(f"{path}: no records")
    return Dataset(tuple(graphs), split_tag=split_tag)


def dumps_graph(g: LabeledGraph) -> str:
    # json emits floats via repr, the shortest round-trip decimal form
    return json.dumps(g.to_record(), sort_keys=True, separators=(",", ":"), allow_nan=False)


def save_dataset(ds: Dataset | Iterable[LabeledGraph], path: str | os.PathLike) -> None:
    graphs = ds.graphs if isinstance(ds, Dataset) else tuple(ds)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for g in graphs:
            fh.write(dumps_graph(g))
            fh.write("\n")


# ---------------------------------------------------------------------------
# Synthetic motif-toxicity benchmark
# ---------------------------------------------------------------------------

N_BASE_TYPES = 6
N_NOVEL_TYPES = 6
N_NODE_TYPES = N_BASE_TYPES + N_NOVEL_TYPES
N_EDGE_TYPES = 3

# toxic motifs, matched against the finished graph:
#   type 3 -- type 4 joined by edge type 2
#   3-ring containing a type-5 node
#   novel signature: type 8 bonded to type 9 (only reachable under shift)
TOXIC_EDGE = (3, 4, 2)
TOXIC_RING_TYPE = 5
NOVEL_TOXIC_PAIR = (8, 9)

LIBRARY_SEED = 20211
TOXIC_RATE = {"iid": 0.45, "ood": 0.5}
DECORATE_P = 0.3


def has_toxic_motif(types: Sequence[int], edges: dict[tuple[int, int], int]) -> bool:
    """Exact label oracle over node types and undirected typed edges."""
    a, b, et = TOXIC_EDGE
    adj: dict[int, set[int]] = {}
    for (u, v), t in edges.items():
        adj.setdefault(u, set()).add(v)
        adj.setdefault(v, set()).add(u)
        pair = {types[u], types[v]}
        if t == et and pair == {a, b}:
            return True
        if pair == set(NOVEL_TOXIC_PAIR):
            return True
    for u, nbrs in adj.items():
        for v in nbrs:
            if v <= u:
                continue
            for w in nbrs & adj.get(v, set()):
                if w > v and TOXIC_RING_TYPE in (types[u], types[v], types[w]):
                    return True
    return False


@dataclass(frozen=True)
class Fragment:
    types: tuple[int, ...]
    edges: tuple[tuple[int, int, int], ...]


def _random_fragment(rng, vocab: Sequence[int], size: int, ring: bool) -> Fragment:
    types = [int(rng.choice(vocab)) for _ in range(size)]
    edges = {}
    for v in range(1, size):
        edges[(int(rng.integers(v)), v)] = int(rng.choice(2, p=[0.75, 0.25]))
    if ring and size >= 5:
        edges[(0, size - 1)] = 0
    return Fragment(tuple(types), tuple((u, v, t) for (u, v), t in sorted(edges.items())))


def _is_toxic(f: Fragment) -> bool:
    return has_toxic_motif(f.types, {(u, v): t for u, v, t in f.edges})


def _build_library() -> dict[str, list[Fragment]]:
    rng = np.random.Generator(np.random.Philox(LIBRARY_SEED))
    benign_vocab = list(range(5))
    novel_vocab = [6, 7, 10, 11, 8, 9]
    lib: dict[str, list[Fragment]] = {k: [] for k in ("benign", "toxic", "novel", "novel_toxic")}

    def fill(key, n, make):
        while len(lib[key]) < n:
            f = make()
            if _is_toxic(f) == key.endswith("toxic") and f not in lib[key]:
                lib[key].append(f)

    fill("benign", 10, lambda: _random_fragment(rng, benign_vocab, int(rng.integers(3, 7)), rng.random() < 0.4))

    def toxic_edge():
        f = _random_fragment(rng, benign_vocab, int(rng.integers(2, 5)), False)
        n = len(f.types)
        return Fragment(f.types[:-1] + (3,) + (4,), f.edges + ((n - 1, n, 2),))

    def toxic_ring():
        f = _random_fragment(rng, benign_vocab, int(rng.integers(1, 4)), False)
        n = len(f.types)
        ring = ((n - 1, n, 0), (n, n + 1, 0), (n - 1, n + 1, 0))
        return Fragment(f.types + (TOXIC_RING_TYPE, int(rng.choice(benign_vocab))), f.edges + ring)

    fill("toxic", 2, toxic_edge)
    fill("toxic", 4, toxic_ring)
    fill("novel", 10, lambda: _random_fragment(rng, [6, 7, 10, 11], int(rng.integers(3, 7)), rng.random() < 0.5))

    def novel_toxic():
        f = _random_fragment(rng, novel_vocab[:4], int(rng.integers(1, 4)), False)
        n = len(f.types)
        return Fragment(f.types + NOVEL_TOXIC_PAIR, f.edges + ((n - 1, n, 0), (n, n + 1, 1)))

    fill("novel_toxic", 3, novel_toxic)
    return lib


FRAGMENTS = _build_library()


@dataclass(frozen=True)
class SynthConfig:
    n_graphs: int
    shift_level: str = "iid"
    seed: int = 0
    min_fragments: int = 2
    max_fragments: int = 4
    id_prefix: str | None = None

    def __post_init__(self):
        if isinstance(self.n_graphs, bool) or not isinstance(self.n_graphs, int) or self.n_graphs < 1:
            raise ValueError("n_graphs must be a positive integer")
        if self.shift_level not in ("iid", "ood"):
            raise ValueError("shift_level must be 'iid' or 'ood'")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ValueError("seed must be a non-negative integer")
        if not 1 <= self.min_fragments <= self.max_fragments:
            raise ValueError("need 1 <= min_fragments <= max_fragments")


def _one_graph(rng: np.random.Generator, cfg: SynthConfig):
    ood = cfg.shift_level == "ood"
    novelty = float(rng.uniform(0.15, 1.0)) if ood else 0.0
    n_frag = int(rng.integers(cfg.min_fragments, cfg.max_fragments + 1))
    picks = []
    for _ in range(n_frag):
        pool = "novel" if rng.random() < novelty else "benign"
        picks.append(FRAGMENTS[pool][int(rng.integers(len(FRAGMENTS[pool])))])
    if rng.random() < TOXIC_RATE[cfg.shift_level]:
        pool = "novel_toxic" if rng.random() < novelty else "toxic"
        picks[int(rng.integers(n_frag))] = FRAGMENTS[pool][int(rng.integers(len(FRAGMENTS[pool])))]

    types: list[int] = []
    edges: dict[tuple[int, int], int] = {}
    for f in picks:
        off = len(types)
        if off:
            # single bond from the fragment root to any earlier atom
            edges[(int(rng.integers(off)), off)] = 0
        types.extend(f.types)
        for u, v, t in f.edges:
            edges[(off + u, off + v)] = t
    if rng.random() < DECORATE_P:
        anchor = int(rng.integers(len(types)))
        types.append(int(rng.integers(3)))
        edges[(anchor, len(types) - 1)] = 0
    return types, edges


def _to_graph(gid: str, types: list[int], edges: dict, label: int) -> LabeledGraph:
    nf = np.zeros((len(types), N_NODE_TYPES))
    nf[np.arange(len(types)), types] = 1.0
    ei, ef = [], []
    for (u, v), t in sorted(edges.items()):
        oh = [0.0] * N_EDGE_TYPES
        oh[t] = 1.0
        ei += [(u, v), (v, u)]
        ef += [oh, oh]
    return LabeledGraph(
        id=gid,
        node_features=nf,
        edge_index=np.array(ei, dtype=np.int64).reshape(-1, 2),
        edge_features=np.array(ef, dtype=np.float64).reshape(-1, N_EDGE_TYPES),
        label=label,
    )


def synth_generate(config: SynthConfig) -> Dataset:
    """Generate a deterministic synthetic benchmark split.

    Graphs are chains of fragments drawn from a pinned library, joined by
    single bonds, over one-hot node and edge types. The label is 1 iff a toxic
    motif is present. At the ``ood`` level each graph draws a novelty rate and
    swaps fragments for ones built from a disjoint node vocabulary, including a
    toxic motif that never occurs at the ``iid`` level.
    """
    stream = 0 if config.shift_level == "iid" else 1
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([config.seed, stream])))
    prefix = config.id_prefix or f"{config.shift_level}-s{config.seed}"
    graphs = []
    for i in range(config.n_graphs):
        types, edges = _one_graph(rng, config)
        label = int(has_toxic_motif(types, edges))
        graphs.append(_to_graph(f"{prefix}-{i:05d}", types, edges, label))
    return Dataset(tuple(graphs), split_tag="custom")
