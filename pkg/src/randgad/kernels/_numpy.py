"""Pure-numpy kernels, used when numba is disabled or unavailable."""

import numpy as np
import scipy.sparse as sp

_PPR_BLOCK = 256


def ppr_topk(indptr, indices, alpha, tol, top):
    n = indptr.shape[0] - 1
    deg = np.diff(indptr)
    inv = np.where(deg > 0, 1.0 / np.maximum(deg, 1), 0.0)
    trans = sp.csr_matrix((np.repeat(inv, deg), indices, indptr), shape=(n, n))
    trans_t = trans.T.tocsr()
    cand = np.full((n, top), -1, dtype=np.int64)
    mass = np.zeros((n, top))
    for lo in range(0, n, _PPR_BLOCK):
        src = np.arange(lo, min(lo + _PPR_BLOCK, n))
        b = src.size
        res = np.zeros((n, b))
        res[src, np.arange(b)] = 1.0
        acc = np.zeros((n, b))
        while res.sum(axis=0).max() > tol:
            acc += alpha * res
            res = (1.0 - alpha) * (trans_t @ res)
        acc = acc.T
        acc[np.arange(b), src] = 0.0
        order = np.argsort(-acc, axis=1, kind="stable")[:, :top]
        vals = np.take_along_axis(acc, order, axis=1)
        hit = vals > 0.0
        width = order.shape[1]
        cand[src, :width] = np.where(hit, order, -1)
        mass[src, :width] = np.where(hit, vals, 0.0)
    return cand, mass


def sample_by_keys(indptr, phi, u, m):
    n = indptr.shape[0] - 1
    rows = np.repeat(np.arange(n), np.diff(indptr))
    live = phi > 0.0
    negkey = np.full(phi.shape, np.inf)
    negkey[live] = -np.log(u[live]) / phi[live]
    order = np.lexsort((negkey, rows))
    rank = np.arange(order.size) - indptr[rows[order]]
    support = np.bincount(rows[live], minlength=n)
    take = rank < np.minimum(support, m)[rows[order]]
    out = order[take].astype(np.int64)
    counts = np.minimum(support, m)
    out_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return out_ptr, out


def reward_sum(sel_ptr, sel_pos, cand, scores, q, phi, p, eps):
    n = sel_ptr.shape[0] - 1
    sizes = np.diff(sel_ptr)
    if sel_pos.size == 0:
        return np.zeros(p.shape[0]), 0, -1
    centers = np.repeat(np.arange(n), sizes)
    logits = 1.0 / (np.abs(scores[centers] - scores[cand[sel_pos]]) + eps)
    starts = sel_ptr[:-1][sizes > 0]
    top = np.maximum.reduceat(logits, starts)
    e = np.exp(logits - np.repeat(top, sizes[sizes > 0]))
    z = np.add.reduceat(e, starts)
    c = e / np.repeat(z, sizes[sizes > 0])
    ph = phi[sel_pos]
    bad = -1
    if np.any(ph <= 0.0):
        bad = int(sel_pos[np.argmax(ph <= 0.0)])
        keep = ph > 0.0
        c, ph, sel_pos = c[keep], ph[keep], sel_pos[keep]
    total = ((c / ph)[:, None] * q[sel_pos] * p[None, :]).sum(axis=0)
    return total, int(np.count_nonzero(sizes)), bad
