import numpy as np
import pytest
from hypothesis import settings
from scipy.stats import ortho_group

from gnn_sngp.graphdata import LabeledGraph

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


def random_graph(rng, n_nodes=None, d_node=4, d_edge=3, gid="g", label=None, extra_edges=2, onehot=False):
    """Connected random graph: a random spanning tree plus a few extra edges."""
    n = int(rng.integers(1, 7)) if n_nodes is None else n_nodes
    if onehot:
        nf = np.eye(d_node)[rng.integers(d_node, size=n)]
    else:
        nf = rng.standard_normal((n, d_node))
    pairs = {(int(rng.integers(i)), i) for i in range(1, n)}
    for _ in range(extra_edges if n > 2 else 0):
        u, v = sorted(rng.choice(n, 2, replace=False).tolist())
        pairs.add((u, v))
    ei, ef = [], []
    for u, v in sorted(pairs):
        e = np.eye(d_edge)[rng.integers(d_edge)] if onehot else rng.standard_normal(d_edge)
        ei += [(u, v), (v, u)]
        ef += [e, e]
    return LabeledGraph(
        id=gid,
        node_features=nf,
        edge_index=np.array(ei, dtype=np.int64).reshape(-1, 2),
        edge_features=np.array(ef).reshape(-1, d_edge),
        label=int(rng.integers(2)) if label is None else label,
    )


def gapped_matrix(r, rows=32, cols=64, ratio=0.9):
    """Random matrix whose second singular value is at most ``ratio`` of the first."""
    U = ortho_group.rvs(rows, random_state=r)
    V = ortho_group.rvs(cols, random_state=r)[:, :rows]
    sv = np.sort(r.uniform(0, ratio, rows))[::-1]
    sv[0] = 1.0
    return r.uniform(0.5, 5) * (U * sv) @ V.T


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria record their verdicts here; printed at the end of the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
