"""Encoder, anchor masking, tanh-gated aggregation and dual reconstruction."""

from dataclasses import dataclass, fields

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .errors import ArgumentError, CapacityError
from .graph import normalized_adjacency

DECODERS = ("gcn", "mlp")
_DECODER_ALIASES = {
    "gcn": "gcn",
    "one-layer-graph-conv": "gcn",
    "mlp": "mlp",
    "two-layer-perceptron": "mlp",
}

# rough peak for the dense topology path: A, A_hat, residual and backward temporaries
DENSE_TOPO_COPIES = 6
DENSE_BUDGET_BYTES = 4 * 2**30


@dataclass(frozen=True)
class ModelConfig:
    hidden: int = 64
    mask_rate: float = 0.03
    alpha: float = 0.5
    lam: float = 1e-5
    decoder: str = "gcn"
    topo_batch: int = 0

    def __post_init__(self):
        if self.decoder not in _DECODER_ALIASES:
            raise ArgumentError(f"unknown decoder {self.decoder!r}")
        object.__setattr__(self, "decoder", _DECODER_ALIASES[self.decoder])
        if not 0.0 <= self.mask_rate < 1.0:
            raise ArgumentError("mask rate must be in [0, 1)")
        if not 0.0 <= self.alpha <= 1.0:
            raise ArgumentError("alpha must be in [0, 1]")
        if self.lam < 0 or self.hidden < 1 or self.topo_batch < 0:
            raise ArgumentError("invalid model hyper-parameters")


@dataclass
class ModelParams:
    enc1: ad.Tensor
    enc2: ad.Tensor
    att: ad.Tensor
    mp: ad.Tensor
    dec1: ad.Tensor
    dec2: ad.Tensor = None

    @classmethod
    def init(cls, d, cfg, rng):
        h = cfg.hidden
        enc1 = ad.xavier_init(d, h, rng, "enc1")
        enc2 = ad.xavier_init(h, h, rng, "enc2")
        att = ad.xavier_init(h, h, rng, "att")
        mp = ad.xavier_init(h, h, rng, "mp")
        if cfg.decoder == "gcn":
            return cls(enc1, enc2, att, mp, ad.xavier_init(h, d, rng, "dec1"))
        return cls(enc1, enc2, att, mp, ad.xavier_init(h, h, rng, "dec1"), ad.xavier_init(h, d, rng, "dec2"))

    @classmethod
    def from_arrays(cls, arrays):
        return cls(**{k: ad.Tensor(np.array(v), requires_grad=True, name=k) for k, v in arrays.items()})

    def named(self):
        return {f.name: getattr(self, f.name) for f in fields(self) if getattr(self, f.name) is not None}

    def tensors(self):
        return list(self.named().values())

    def snapshot(self):
        return {k: t.data.copy() for k, t in self.named().items()}


@dataclass
class GraphData:
    """Dense and sparse views of a graph that the forward pass needs."""

    n: int
    x: np.ndarray
    adj: sp.csr_matrix
    adj_dense: np.ndarray
    adj_norm: sp.csr_matrix

    @classmethod
    def from_graph(cls, g, dense=True):
        if dense:
            check_dense_budget(g.n)
        return cls(
            n=g.n,
            x=g.attributes,
            adj=g.adjacency,
            adj_dense=g.dense_adjacency() if dense else None,
            adj_norm=normalized_adjacency(g, "symmetric", self_loops=True),
        )


def check_dense_budget(n, budget=DENSE_BUDGET_BYTES):
    need = DENSE_TOPO_COPIES * 8 * n * n
    if need > budget:
        raise CapacityError(
            f"dense topology decoder needs ~{need / 2**30:.1f} GiB for n={n}; "
            "use minibatch topology loss (--topo-batch)"
        )


def encode(x, params):
    return ad.tanh(ad.matmul(ad.tanh(ad.matmul(x, params.enc1)), params.enc2))


def center_anchor(e):
    return ad.mean_rows(e)


def mask_ids(e, anchor, mask_rate):
    """Indices of the floor(mask_rate * n) rows farthest from the anchor, ties to lower index."""
    e = e.data if isinstance(e, ad.Tensor) else np.asarray(e)
    anchor = anchor.data if isinstance(anchor, ad.Tensor) else np.asarray(anchor)
    n = e.shape[0]
    count = int(np.floor(mask_rate * n + 1e-9))
    if count == 0:
        return np.zeros(0, dtype=np.int64)
    dist = ((e - anchor) ** 2).sum(axis=1)
    order = np.argsort(-dist, kind="stable")
    return np.sort(order[:count]).astype(np.int64)


def _routing(n, ptr, nodes, masked):
    """Gather matrix stacking [i; N_i] for every unmasked i, and the matching row-sum matrix."""
    keep = np.ones(n, dtype=bool)
    keep[masked] = False
    sizes = np.diff(ptr)
    recv = np.flatnonzero(keep)
    counts = 1 + sizes[recv]
    total = int(counts.sum())
    owner = np.repeat(recv, counts)
    starts = np.cumsum(counts) - counts
    src = np.empty(total, dtype=np.int64)
    src[starts] = recv
    nb_mask = np.ones(total, dtype=bool)
    nb_mask[starts] = False
    src[nb_mask] = nodes[np.repeat(keep, sizes)]
    ones = np.ones(total)
    rows = np.arange(total)
    gather = sp.csr_matrix((ones, (rows, src)), shape=(total, n))
    reduce = sp.csr_matrix((ones, (owner, rows)), shape=(n, total))
    return gather, reduce


def _as_ptr_nodes(neighborhoods, n):
    if isinstance(neighborhoods, tuple):
        ptr, nodes = neighborhoods
        return np.asarray(ptr, dtype=np.int64), np.asarray(nodes, dtype=np.int64)
    sizes = [len(nb) for nb in neighborhoods]
    if len(sizes) != n:
        raise ArgumentError("one neighborhood per node required")
    ptr = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    nodes = np.concatenate([np.asarray(nb, dtype=np.int64) for nb in neighborhoods]) if ptr[-1] else np.zeros(0, np.int64)
    return ptr, nodes


def aggregate(e, neighborhoods, masked, params):
    """Masked rows keep their encoding; the others get (sum of tanh-gated member rows) @ W_mp.

    ``neighborhoods`` is either a list of index arrays or a (ptr, nodes)
    CSR pair.
    """
    n = e.shape[0]
    ptr, nodes = _as_ptr_nodes(neighborhoods, n)
    masked = np.asarray(masked, dtype=np.int64)
    gather, reduce = _routing(n, ptr, nodes, masked)
    stacked = ad.spmm(gather, e)
    # gather only copies rows, so project once per node before stacking
    gate = ad.tanh(ad.spmm(gather, ad.matmul(e, params.att)))
    summed = ad.spmm(reduce, ad.mul(gate, stacked))
    keep_masked = sp.diags(np.isin(np.arange(n), masked).astype(np.float64)).tocsr()
    return ad.add(ad.spmm(keep_masked, e), ad.matmul(summed, params.mp))


def decode_topology(h):
    check_dense_budget(h.shape[0])
    return ad.matmul(h, ad.transpose(h))


def decode_attribute(h, adj_norm, params, kind="gcn"):
    kind = _DECODER_ALIASES.get(kind, kind)
    if kind == "gcn":
        return ad.matmul(ad.tanh(ad.spmm(adj_norm, h)), params.dec1)
    if kind == "mlp":
        return ad.matmul(ad.tanh(ad.matmul(h, params.dec1)), params.dec2)
    raise ArgumentError(f"unknown decoder {kind!r}")


def _values(t):
    return t.data if isinstance(t, ad.Tensor) else np.asarray(t, dtype=np.float64)


def anomaly_scores(a, a_hat, x, x_hat, alpha):
    """(1 - alpha) * ||a_i - a_hat_i||^2 + alpha * ||x_i - x_hat_i||^2 per node."""
    a = a.toarray() if sp.issparse(a) else _values(a)
    topo = ((a - _values(a_hat)) ** 2).sum(axis=1)
    attr = ((_values(x) - _values(x_hat)) ** 2).sum(axis=1)
    return (1.0 - alpha) * topo + alpha * attr


def l2_penalty(params):
    terms = [ad.sum(ad.mul(t, t)) for t in params.tensors()]
    out = terms[0]
    for t in terms[1:]:
        out = ad.add(out, t)
    return out


def loss(a, a_hat, x, x_hat, alpha, lam, params):
    """Joint objective; returns (loss, per-node topology errors, per-node attribute errors)."""
    n = x_hat.shape[0]
    topo_rows = ad.sqdist_rows(a_hat, a)
    attr_rows = ad.sqdist_rows(x_hat, x)
    total = ad.add(
        ad.scale(ad.sum(topo_rows), (1.0 - alpha) / n),
        ad.scale(ad.sum(attr_rows), alpha / n),
    )
    if lam:
        total = ad.add(total, ad.scale(l2_penalty(params), lam))
    return total, topo_rows, attr_rows


def topology_row_errors(h, adj, chunk=2048):
    """||a_i - h_i H^T||^2 for every row without materializing the n x n product."""
    h = _values(h)
    n = h.shape[0]
    out = np.empty(n)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        block = h[lo:hi] @ h.T
        block -= adj[lo:hi].toarray()
        out[lo:hi] = (block * block).sum(axis=1)
    return out


@dataclass
class Forward:
    e: ad.Tensor
    h: ad.Tensor
    masked: np.ndarray
    loss: ad.Tensor
    loss_topo: float
    loss_attr: float
    scores: np.ndarray


def forward(data, params, cfg, neighborhoods, rng=None):
    """Full pass from attributes to loss and per-node anomaly scores."""
    e = encode(data.x, params)
    masked = mask_ids(e, center_anchor(e), cfg.mask_rate)
    h = aggregate(e, neighborhoods, masked, params)
    x_hat = decode_attribute(h, data.adj_norm, params, cfg.decoder)
    n = data.n
    if cfg.topo_batch and cfg.topo_batch < n:
        attr_rows = ad.sqdist_rows(x_hat, data.x)
        rows = np.sort(rng.choice(n, size=cfg.topo_batch, replace=False))
        pick = sp.csr_matrix((np.ones(rows.size), (np.arange(rows.size), rows)), shape=(rows.size, n))
        a_hat_b = ad.matmul(ad.spmm(pick, h), ad.transpose(h))
        batch_rows = ad.sqdist_rows(a_hat_b, data.adj[rows].toarray())
        total = ad.add(
            ad.scale(ad.sum(batch_rows), (1.0 - cfg.alpha) / rows.size),
            ad.scale(ad.sum(attr_rows), cfg.alpha / n),
        )
        if cfg.lam:
            total = ad.add(total, ad.scale(l2_penalty(params), cfg.lam))
        topo_vals = topology_row_errors(h, data.adj)
    else:
        total, topo_rows, attr_rows = loss(
            data.adj_dense, decode_topology(h), data.x, x_hat, cfg.alpha, cfg.lam, params
        )
        topo_vals = topo_rows.data
    scores = (1.0 - cfg.alpha) * topo_vals + cfg.alpha * attr_rows.data
    return Forward(
        e=e, h=h, masked=masked, loss=total,
        loss_topo=float(topo_vals.mean()), loss_attr=float(attr_rows.data.mean()),
        scores=scores,
    )
