"""Attributed graph container, adjacency normalization and file I/O."""

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import ArgumentError, ConsistencyError, FormatError

log = logging.getLogger(__name__)

ATTR_MAGIC = b"RANDATTR"


def _canonical(m):
    m = sp.csr_matrix(m, dtype=np.float64)
    m.sum_duplicates()
    m.eliminate_zeros()
    m.sort_indices()
    return m


@dataclass(frozen=True)
class Graph:
    """Undirected attributed graph.

    ``adjacency`` is a binary symmetric CSR matrix without self-loops,
    ``attributes`` an (n, d) float64 array and ``labels`` an optional
    0/1 int8 vector.
    """

    adjacency: sp.csr_matrix
    attributes: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        a = self.adjacency
        x = self.attributes
        if a.shape[0] != a.shape[1]:
            raise ConsistencyError(f"adjacency must be square, got {a.shape}")
        if x.ndim != 2 or x.shape[0] != a.shape[0]:
            raise ConsistencyError(
                f"attribute rows ({x.shape[0] if x.ndim else 0}) != node count ({a.shape[0]})"
            )
        if not np.all(np.isfinite(x)):
            raise FormatError("non-finite attribute value")
        if a.diagonal().any():
            raise ConsistencyError("self-loops stored in adjacency")
        if (a != a.T).nnz:
            raise ConsistencyError("adjacency is not symmetric")
        if self.labels is not None:
            lab = self.labels
            if lab.shape != (a.shape[0],):
                raise ConsistencyError(f"label count {lab.shape} != node count {a.shape[0]}")
            if not np.isin(lab, (0, 1)).all():
                raise FormatError("labels must be 0/1")

    @classmethod
    def from_edges(cls, n, edges, attributes, labels=None):
        """Build from an (m, 2) edge array; orientation, duplicates and self-loops are normalized."""
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise FormatError(f"edge endpoint out of range [0, {n})")
        keep = edges[:, 0] != edges[:, 1]
        src = np.concatenate([edges[keep, 0], edges[keep, 1]])
        dst = np.concatenate([edges[keep, 1], edges[keep, 0]])
        adj = sp.csr_matrix((np.ones(src.size), (src, dst)), shape=(n, n))
        adj.sum_duplicates()
        adj.data[:] = 1.0
        attributes = np.ascontiguousarray(attributes, dtype=np.float64)
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int8)
        return cls(_canonical(adj), attributes, labels)

    @property
    def n(self):
        return self.adjacency.shape[0]

    @property
    def d(self):
        return self.attributes.shape[1]

    @property
    def num_edges(self):
        return self.adjacency.nnz // 2

    def degrees(self):
        return np.diff(self.adjacency.indptr)

    def edge_list(self):
        """Undirected edges as (m, 2) array with src < dst."""
        coo = sp.triu(self.adjacency, k=1).tocoo()
        order = np.lexsort((coo.col, coo.row))
        return np.stack([coo.row[order], coo.col[order]], axis=1).astype(np.int64)

    def neighbors(self, i):
        a = self.adjacency
        return a.indices[a.indptr[i]:a.indptr[i + 1]]

    def dense_adjacency(self):
        return self.adjacency.toarray()

    def without_labels(self):
        return Graph(self.adjacency, self.attributes, None)

    def with_labels(self, labels):
        return Graph(self.adjacency, self.attributes, np.asarray(labels, dtype=np.int8))


def normalized_adjacency(g, mode="symmetric", self_loops=False):
    """D^-1/2 (A [+I]) D^-1/2 or D^-1 (A [+I]) as canonical CSR.

    Isolated nodes keep an all-zero row, or a single 1.0 when self-loops
    are added.
    """
    a = g.adjacency
    if self_loops:
        a = a + sp.identity(g.n, format="csr")
    a = sp.csr_matrix(a, dtype=np.float64)
    deg = np.asarray(a.sum(axis=1)).ravel()
    rows = np.repeat(np.arange(g.n), np.diff(a.indptr))
    if mode == "symmetric":
        # 1/sqrt(d_i d_j) in one rounding step
        vals = a.data / np.sqrt(deg[rows] * deg[a.indices])
    elif mode == "row-stochastic":
        vals = a.data / deg[rows]
    else:
        raise ArgumentError(f"unknown normalization mode {mode!r}")
    return _canonical(sp.csr_matrix((vals, a.indices.copy(), a.indptr.copy()), shape=a.shape))


def spmm_power(m, k):
    """Exact sparse power m**k for k in {1, 2}."""
    if k not in (1, 2):
        raise ArgumentError(f"power must be 1 or 2, got {k}")
    m = _canonical(m)
    if m.shape[0] != m.shape[1]:
        raise ArgumentError("matrix must be square")
    if k == 1:
        return m.copy()
    return _canonical(m @ m)


# ---------------------------------------------------------------- file I/O


def read_edges(path):
    path = Path(path)
    if not path.read_text().strip():
        return np.zeros((0, 2), dtype=np.int64)
    try:
        raw = np.loadtxt(path, dtype=np.int64, ndmin=2, comments="#")
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if raw.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if raw.shape[1] != 2:
        raise FormatError(f"{path}: expected 'src dst' pairs, got {raw.shape[1]} columns")
    return raw


def read_attributes(path):
    """Headerless CSV, or the RANDATTR binary layout (detected by magic)."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head == ATTR_MAGIC:
        return read_attributes_binary(path)
    try:
        x = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if not np.all(np.isfinite(x)):
        raise FormatError(f"{path}: non-finite attribute value")
    return x


def read_attributes_binary(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != ATTR_MAGIC or len(blob) < 24:
        raise FormatError(f"{path}: bad RANDATTR header")
    n, d = struct.unpack("<QQ", blob[8:24])
    body = np.frombuffer(blob, dtype="<f4", offset=24)
    if body.size != n * d:
        raise FormatError(f"{path}: expected {n * d} floats, found {body.size}")
    x = body.reshape(n, d).astype(np.float64)
    if not np.all(np.isfinite(x)):
        raise FormatError(f"{path}: non-finite attribute value")
    return x


def write_attributes_binary(path, x):
    x = np.asarray(x)
    with open(path, "wb") as fh:
        fh.write(ATTR_MAGIC)
        fh.write(struct.pack("<QQ", x.shape[0], x.shape[1]))
        fh.write(np.ascontiguousarray(x, dtype="<f4").tobytes())


def read_labels(path):
    path = Path(path)
    try:
        lab = np.loadtxt(path, dtype=np.int64, ndmin=1)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if not np.isin(lab, (0, 1)).all():
        raise FormatError(f"{path}: labels must be 0/1")
    return lab.astype(np.int8)


def load_graph(edge_path, attr_path, label_path=None):
    x = read_attributes(attr_path)
    n = x.shape[0]
    edges = read_edges(edge_path)
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        raise FormatError(f"{edge_path}: node index out of range [0, {n})")
    loops = int(np.count_nonzero(edges[:, 0] == edges[:, 1])) if edges.size else 0
    if loops:
        log.warning("dropped %d self-loop(s) from %s", loops, edge_path)
    labels = None
    if label_path is not None:
        labels = read_labels(label_path)
        if labels.size != n:
            raise ConsistencyError(f"{label_path}: {labels.size} labels for {n} attribute rows")
    return Graph.from_edges(n, edges, x, labels)


def _format_rows(x):
    # repr-precision text; integer-valued matrices are written as integers
    if np.array_equal(x, np.round(x)) and np.abs(x).max(initial=0) < 2**53:
        body = x.astype(np.int64)
        fmt = "%d"
    else:
        body = x
        fmt = "%.17g"
    return body, fmt


def save_graph(g, directory, binary_attributes=False):
    """Write edges.txt, attrs.csv (or attrs.bin) and labels.txt (if labelled)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {"edges": directory / "edges.txt"}
    np.savetxt(paths["edges"], g.edge_list(), fmt="%d")
    if binary_attributes:
        paths["attrs"] = directory / "attrs.bin"
        write_attributes_binary(paths["attrs"], g.attributes)
    else:
        paths["attrs"] = directory / "attrs.csv"
        body, fmt = _format_rows(g.attributes)
        np.savetxt(paths["attrs"], body, fmt=fmt, delimiter=",")
    if g.labels is not None:
        paths["labels"] = directory / "labels.txt"
        np.savetxt(paths["labels"], g.labels, fmt="%d")
    return paths
