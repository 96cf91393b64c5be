"""Synthetic attribute-clustered graphs for dataset-free runs.

Nodes fall into clusters; each cluster prefers its own block of
vocabulary words and most edges stay inside a cluster, which is the
homophily that injected anomalies then break.
"""

import numpy as np

from .graph import Graph
from .rng import stream


def make_clustered_graph(n=1000, clusters=5, d=100, edges=None, avg_degree=5.0,
                         intra=0.9, words=15, topic_share=0.8, value=1.0, seed=0):
    """Bag-of-words attributed graph with exactly ``edges`` undirected edges.

    ``edges`` defaults to round(n * avg_degree / 2). ``words`` is a fixed
    per-node word count or an inclusive (low, high) range drawn uniformly;
    present words carry ``value``.
    """
    rng = stream(seed, "data")
    m = int(round(n * avg_degree / 2)) if edges is None else int(edges)
    member = rng.integers(0, clusters, size=n)
    blocks = np.array_split(np.arange(d), clusters)
    lo, hi = (words, words) if np.isscalar(words) else words
    counts = rng.integers(lo, hi + 1, size=n)

    x = np.zeros((n, d))
    for i in range(n):
        block = blocks[member[i]]
        n_topic = min(int(round(counts[i] * topic_share)), block.size)
        picks = rng.choice(block, size=n_topic, replace=False)
        rest = rng.choice(d, size=counts[i] - n_topic, replace=False)
        x[i, picks] = value
        x[i, rest] = value

    by_cluster = [np.flatnonzero(member == c) for c in range(clusters)]
    seen = set()
    out = []
    while len(out) < m:
        i = int(rng.integers(n))
        if rng.random() < intra and by_cluster[member[i]].size > 1:
            j = int(rng.choice(by_cluster[member[i]]))
        else:
            j = int(rng.integers(n))
        if i == j:
            continue
        key = (min(i, j), max(i, j))
        if key in seen:
            continue
        seen.add(key)
        out.append(key)
    return Graph.from_edges(n, np.array(out, dtype=np.int64).reshape(-1, 2), x)


def make_cora_like(seed=0):
    """Graph with Cora's published shape: 2708 nodes, 5429 edges, 1433 binary attributes."""
    return make_clustered_graph(n=2708, clusters=7, d=1433, edges=5429, words=18, seed=seed)


def make_detection_benchmark(seed=0, n=1000):
    """Attribute-clustered graph used for the dataset-free detection check.

    Word counts vary per node so rows differ in norm, and every present
    word carries 0.25 so the average row norm is about one.
    """
    return make_clustered_graph(n=n, clusters=5, d=100, avg_degree=5.0, words=(5, 25), value=0.25, seed=seed)
