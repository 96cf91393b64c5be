"""Candidate-neighborhood strategy tables and mixture sampling.

Each strategy contributes a per-center candidate list whose weights sum
to one. A :class:`NeighborPool` stores the union of those lists in CSR
layout together with the (entries x K) weight matrix, so the mixture
over strategies is a single matrix-vector product.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import ArgumentError
from .graph import normalized_adjacency, spmm_power

STRATEGIES = ("onehop", "twohop", "knn", "ppr")


@dataclass(frozen=True)
class PoolConfig:
    knn_k: int = 10
    teleport: float = 0.15
    ppr_top: int = 10
    ppr_tol: float = 1e-5
    sample_size: int = 20
    strategies: tuple = STRATEGIES


@dataclass
class StrategyTable:
    name: str
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray

    @property
    def n(self):
        return self.indptr.size - 1

    def row(self, i):
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.weights[lo:hi]

    def as_dict(self, i):
        idx, w = self.row(i)
        return {int(j): float(v) for j, v in zip(idx, w)}

    def to_csr(self):
        return sp.csr_matrix((self.weights, self.indices, self.indptr), shape=(self.n, self.n))


def _table_from_csr(name, m):
    m = sp.csr_matrix(m)
    m.eliminate_zeros()
    m.sort_indices()
    sums = np.asarray(m.sum(axis=1)).ravel()
    scale = np.where(sums > 0, 1.0 / np.where(sums > 0, sums, 1.0), 0.0)
    m = sp.diags(scale) @ m
    m = sp.csr_matrix(m)
    m.sort_indices()
    return StrategyTable(name, m.indptr.astype(np.int64), m.indices.astype(np.int64), m.data.astype(np.float64))


def _table_from_rows(name, cand, weights):
    """Rows of an (n, k) candidate array padded with -1."""
    valid = cand >= 0
    counts = valid.sum(axis=1)
    w = np.where(valid, weights, 0.0)
    sums = w.sum(axis=1, keepdims=True)
    w = np.divide(w, sums, out=np.zeros_like(w), where=sums > 0)
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return StrategyTable(name, indptr, cand[valid].astype(np.int64), w[valid])


def build_onehop(g):
    return _table_from_csr("onehop", normalized_adjacency(g, "row-stochastic", self_loops=False))


def build_twohop(g):
    p = normalized_adjacency(g, "row-stochastic", self_loops=False)
    two = spmm_power(p, 2)
    near = (g.adjacency + sp.identity(g.n, format="csr")).astype(bool)
    two = two - two.multiply(near)
    return _table_from_csr("twohop", two)


def build_knn(g, knn_k=10, rng=None, chunk=1024):
    """Top-``knn_k`` cosine neighbors; zero-norm rows get uniform random candidates."""
    n = g.n
    k = int(knn_k)
    if not 0 < k < n:
        raise ArgumentError(f"knn_k must be in [1, n), got {k}")
    if rng is None:
        rng = np.random.default_rng(0)
    x = g.attributes
    norms = np.linalg.norm(x, axis=1)
    zero = norms == 0
    xn = np.divide(x, norms[:, None], out=np.zeros_like(x), where=~zero[:, None])
    cand = np.empty((n, k), dtype=np.int64)
    sims = np.empty((n, k))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        neg = -(xn[lo:hi] @ xn.T)
        neg[np.arange(hi - lo), np.arange(lo, hi)] = np.inf
        kth = np.partition(neg, k - 1, axis=1)[:, k - 1:k]
        strict = neg < kth
        ties = neg == kth
        need = k - strict.sum(axis=1, keepdims=True)
        chosen = strict | (ties & (np.cumsum(ties, axis=1) <= need))
        idx = np.nonzero(chosen)[1].reshape(hi - lo, k)
        vals = np.take_along_axis(neg, idx, axis=1)
        order = np.argsort(vals, axis=1, kind="stable")
        cand[lo:hi] = np.take_along_axis(idx, order, axis=1)
        sims[lo:hi] = -np.take_along_axis(vals, order, axis=1)
    weights = np.maximum(sims, 0.0)
    flat = weights.sum(axis=1) <= 0
    weights[flat] = 1.0
    for i in np.flatnonzero(zero):
        others = rng.choice(n - 1, size=k, replace=False)
        cand[i] = np.sort(others + (others >= i))
        weights[i] = 1.0
    return _table_from_rows("knn", cand, weights)


def build_ppr(g, teleport=0.15, top=10, tol=1e-5):
    a = g.adjacency
    cand, mass = kernels.ppr_topk(
        a.indptr.astype(np.int64), a.indices.astype(np.int64), float(teleport), float(tol), int(top)
    )
    return _table_from_rows("ppr", cand, mass)


def build_tables(g, cfg=PoolConfig(), rng=None):
    builders = {
        "onehop": lambda: build_onehop(g),
        "twohop": lambda: build_twohop(g),
        "knn": lambda: build_knn(g, cfg.knn_k, rng),
        "ppr": lambda: build_ppr(g, cfg.teleport, cfg.ppr_top, cfg.ppr_tol),
    }
    return [builders[name]() for name in cfg.strategies]


@dataclass
class NeighborPool:
    """Union of K strategy tables plus the latest sampled neighborhoods."""

    tables: list
    indptr: np.ndarray = field(init=False)
    indices: np.ndarray = field(init=False)
    q: np.ndarray = field(init=False)
    sel_ptr: np.ndarray = field(init=False, default=None)
    sel_pos: np.ndarray = field(init=False, default=None)
    cache: dict = field(init=False, default_factory=dict)

    def __post_init__(self):
        n = self.tables[0].n
        rows, cols, arm, w = [], [], [], []
        for k, t in enumerate(self.tables):
            rows.append(np.repeat(np.arange(n), np.diff(t.indptr)))
            cols.append(t.indices)
            arm.append(np.full(t.indices.size, k))
            w.append(t.weights)
        rows, cols = np.concatenate(rows), np.concatenate(cols)
        arm, w = np.concatenate(arm), np.concatenate(w)
        key = rows * n + cols
        uniq, inv = np.unique(key, return_inverse=True)
        q = np.zeros((uniq.size, len(self.tables)))
        np.add.at(q, (inv, arm), w)
        urows, ucols = uniq // n, uniq % n
        counts = np.bincount(urows, minlength=n)
        empty = np.flatnonzero(counts == 0) if n > 1 else np.zeros(0, dtype=np.int64)
        if empty.size:
            # no strategy offers anything: every other node, uniform
            fill_rows = np.repeat(empty, n - 1)
            fill_cols = np.tile(np.arange(n - 1), empty.size)
            fill_cols = fill_cols + (fill_cols >= fill_rows)
            urows = np.concatenate([urows, fill_rows])
            ucols = np.concatenate([ucols, fill_cols])
            q = np.vstack([q, np.zeros((fill_rows.size, q.shape[1]))])
            order = np.lexsort((ucols, urows))
            urows, ucols, q = urows[order], ucols[order], q[order]
            counts = np.bincount(urows, minlength=n)
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.indices = ucols.astype(np.int64)
        self.q = np.ascontiguousarray(q)

    @property
    def n(self):
        return self.indptr.size - 1

    @property
    def K(self):
        return len(self.tables)

    def row_slice(self, i):
        return slice(self.indptr[i], self.indptr[i + 1])

    def mixture(self, p):
        """Mixture weights for every union entry; each non-empty row sums to 1."""
        raw = self.q @ np.asarray(p, dtype=np.float64)
        sizes = np.diff(self.indptr)
        rows = np.repeat(np.arange(self.n), sizes)
        sums = np.bincount(rows, weights=raw, minlength=self.n)
        dead = sums[rows] <= 0
        raw = np.where(dead, 1.0, raw)
        sums = np.bincount(rows, weights=raw, minlength=self.n)
        return raw / sums[rows]

    def sample(self, phi, m, rng):
        """Draw up to m neighbors per node without replacement; caches and returns (ptr, nodes)."""
        u = 1.0 - rng.random(self.indices.size)
        self.sel_ptr, self.sel_pos = kernels.sample_by_keys(self.indptr, phi, u, int(m))
        return self.sel_ptr, self.indices[self.sel_pos]

    def neighborhoods(self):
        nodes = self.indices[self.sel_pos]
        return [nodes[self.sel_ptr[i]:self.sel_ptr[i + 1]] for i in range(self.n)]

    def dump_tsv(self, path):
        with open(path, "w") as fh:
            fh.write("strategy\tcenter\tcandidate\tweight\n")
            for t in self.tables:
                rows = np.repeat(np.arange(t.n), np.diff(t.indptr))
                for i, j, w in zip(rows, t.indices, t.weights):
                    fh.write(f"{t.name}\t{i}\t{j}\t{w:.17g}\n")


def build_pool(g, cfg=PoolConfig(), rng=None):
    return NeighborPool(build_tables(g, cfg, rng))


def mixture_distribution(pool, p, i):
    """Mixture over node i's candidates as (candidate nodes, probabilities)."""
    s = pool.row_slice(i)
    raw = pool.q[s] @ np.asarray(p, dtype=np.float64)
    if raw.sum() <= 0:
        raw = np.ones_like(raw)
    return pool.indices[s].copy(), raw / raw.sum()


def sample_neighborhood(pool, phi_i, i, m, rng):
    """Up to m draws without replacement from one node's mixture; cached as pool.cache[i]."""
    cand, probs = phi_i
    ptr = np.array([0, len(cand)], dtype=np.int64)
    u = 1.0 - rng.random(len(cand))
    _, pos = kernels.sample_by_keys(ptr, np.asarray(probs, dtype=np.float64), u, int(m))
    nodes = np.asarray(cand)[pos]
    pool.cache[i] = nodes
    return nodes
