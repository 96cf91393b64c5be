"""Clique (structural) and attribute-swap anomaly injection."""

from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ArgumentError, CapacityError
from .graph import Graph, _canonical
from .rng import stream


@dataclass(frozen=True)
class InjectionConfig:
    clique_size: int = 15
    clique_count: int = 5
    attr_count: int = 75
    candidate_pool_size: int = 50
    seed: int = 0

    def validate(self, n):
        if self.clique_size < 2:
            raise ArgumentError("clique size must be >= 2")
        if self.clique_count < 0 or self.attr_count < 0:
            raise ArgumentError("anomaly counts must be non-negative")
        if self.candidate_pool_size < 1:
            raise ArgumentError("candidate pool size must be >= 1")
        total = self.clique_size * self.clique_count + self.attr_count
        if total > n:
            raise CapacityError(f"{total} anomalies requested for {n} nodes")

    def to_dict(self):
        return asdict(self)


def _existing(g):
    if g.labels is None:
        return np.zeros(g.n, dtype=bool)
    return g.labels.astype(bool)


def inject_structural(g, p, q, rng):
    """Connect q node-disjoint groups of p unlabeled nodes into cliques.

    Returns the new graph (labels merged) and the sorted clique members.
    """
    graph, members, _ = _inject_structural(g, p, q, rng)
    return graph, np.sort(members)


def _inject_structural(g, p, q, rng):
    if p < 2:
        raise ArgumentError("clique size must be >= 2")
    taken = _existing(g)
    free = np.flatnonzero(~taken)
    if p * q > free.size:
        raise CapacityError(f"need {p * q} unlabeled nodes for cliques, have {free.size}")
    if q == 0:
        return g, np.zeros(0, dtype=np.int64), []
    chosen = rng.choice(free, size=p * q, replace=False)
    groups = [np.sort(chosen[c * p:(c + 1) * p]) for c in range(q)]
    iu, ju = np.triu_indices(p, k=1)
    rows = np.concatenate([grp[iu] for grp in groups] + [grp[ju] for grp in groups])
    cols = np.concatenate([grp[ju] for grp in groups] + [grp[iu] for grp in groups])
    extra = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(g.n, g.n))
    adj = g.adjacency + extra
    adj.data[:] = 1.0
    labels = taken.astype(np.int8)
    labels[chosen] = 1
    return Graph(_canonical(adj), g.attributes, labels), chosen.astype(np.int64), groups


def inject_attribute(g, count, k, rng):
    """Replace the attributes of ``count`` unlabeled targets with their farthest of k candidates.

    Candidates exclude the target; distance ties go to the lowest node
    index. Targets are processed sequentially, so later targets see the
    rows already swapped in.
    """
    n = g.n
    if k >= n:
        raise ArgumentError(f"candidate pool size {k} must be < node count {n}")
    taken = _existing(g)
    free = np.flatnonzero(~taken)
    if count > free.size:
        raise CapacityError(f"need {count} unlabeled nodes for attribute anomalies, have {free.size}")
    if count == 0:
        return g, np.zeros(0, dtype=np.int64)
    x = g.attributes.copy()
    targets = rng.choice(free, size=count, replace=False)
    for i in targets:
        others = rng.choice(n - 1, size=k, replace=False)
        cand = np.sort(others + (others >= i))
        dist = np.einsum("ij,ij->i", x[cand] - x[i], x[cand] - x[i])
        x[i] = x[cand[int(np.argmax(dist))]]
    labels = taken.astype(np.int8)
    labels[targets] = 1
    return Graph(g.adjacency, x, labels), np.sort(targets).astype(np.int64)


def inject(g, cfg):
    """Full protocol: cliques first, then attribute swaps on the remaining nodes.

    Returns (graph, structural members, attribute targets, clique groups).
    """
    cfg.validate(g.n)
    rng = stream(cfg.seed, "inject")
    g1, structural, groups = _inject_structural(g, cfg.clique_size, cfg.clique_count, rng)
    g2, attribute = inject_attribute(g1, cfg.attr_count, cfg.candidate_pool_size, rng)
    if g2.labels is None:
        g2 = g2.with_labels(_existing(g))
    return g2, np.sort(structural), attribute, groups
