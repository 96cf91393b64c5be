import numpy as np
import pytest

from randgad.graph import Graph


def random_graph(n, p=0.15, d=6, seed=0, labels=False):
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.random((n, n)) < p, k=1)
    edges = np.argwhere(upper)
    x = rng.normal(size=(n, d))
    lab = (rng.random(n) < 0.2).astype(np.int8) if labels else None
    if lab is not None:
        lab[0], lab[1] = 1, 0
    return Graph.from_edges(n, edges, x, lab)


def path_graph(n, d=2):
    edges = np.array([[i, i + 1] for i in range(n - 1)], dtype=np.int64).reshape(-1, 2)
    return Graph.from_edges(n, edges, np.eye(n, d) + 1.0)


@pytest.fixture
def small_graph():
    return random_graph(30, seed=3)


@pytest.fixture
def labelled_graph():
    return random_graph(40, seed=4, labels=True)
