"""numba-compiled kernels. Signatures mirror ``_numpy``."""

import numpy as np
from numba import njit


_PPR_BLOCK = 64


@njit(cache=True)
def _ppr_block(indptr, indices, deg, lo, b, alpha, tol, acc, r, rn):
    """Iterate residuals for sources lo..lo+b-1 at once; rows are nodes, columns sources.

    Mass reaching a dangling node is absorbed, as in the dense iteration.
    """
    n = deg.shape[0]
    r[:, :] = 0.0
    acc[:, :] = 0.0
    for c in range(b):
        r[lo + c, c] = 1.0
    worst = 1.0
    while worst > tol:
        rn[:, :] = 0.0
        for u in range(n):
            du = deg[u]
            for c in range(b):
                acc[u, c] += alpha * r[u, c]
            if du == 0:
                continue
            f = (1.0 - alpha) / du
            for e in range(indptr[u], indptr[u + 1]):
                v = indices[e]
                for c in range(b):
                    rn[v, c] += f * r[u, c]
        worst = 0.0
        for c in range(b):
            s = 0.0
            for u in range(n):
                s += rn[u, c]
            if s > worst:
                worst = s
        r, rn = rn, r


@njit(cache=True)
def ppr_topk(indptr, indices, alpha, tol, top):
    n = indptr.shape[0] - 1
    deg = np.empty(n, dtype=np.int64)
    for i in range(n):
        deg[i] = indptr[i + 1] - indptr[i]
    cand = np.full((n, top), -1, dtype=np.int64)
    mass = np.zeros((n, top))
    acc = np.zeros((n, _PPR_BLOCK))
    r = np.zeros((n, _PPR_BLOCK))
    rn = np.zeros((n, _PPR_BLOCK))
    vals = np.empty(n)
    for lo in range(0, n, _PPR_BLOCK):
        b = min(_PPR_BLOCK, n - lo)
        _ppr_block(indptr, indices, deg, lo, b, alpha, tol, acc, r, rn)
        for c in range(b):
            s = lo + c
            for u in range(n):
                vals[u] = -acc[u, c]
            vals[s] = 1.0
            order = np.argsort(vals, kind="mergesort")
            k = 0
            for t in range(n):
                v = order[t]
                if k == top or v == s or acc[v, c] <= 0.0:
                    break
                cand[s, k] = v
                mass[s, k] = acc[v, c]
                k += 1
    return cand, mass


@njit(cache=True)
def sample_by_keys(indptr, phi, u, m):
    n = indptr.shape[0] - 1
    counts = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        c = 0
        for e in range(indptr[i], indptr[i + 1]):
            if phi[e] > 0.0:
                c += 1
        counts[i + 1] = min(c, m)
    out_ptr = np.cumsum(counts)
    out = np.empty(out_ptr[n], dtype=np.int64)
    for i in range(n):
        lo = indptr[i]
        hi = indptr[i + 1]
        if out_ptr[i + 1] == out_ptr[i]:
            continue
        negkey = np.empty(hi - lo)
        for e in range(lo, hi):
            if phi[e] > 0.0:
                negkey[e - lo] = -np.log(u[e]) / phi[e]
            else:
                negkey[e - lo] = np.inf
        order = np.argsort(negkey, kind="mergesort")
        for t in range(out_ptr[i + 1] - out_ptr[i]):
            out[out_ptr[i] + t] = lo + order[t]
    return out_ptr, out


@njit(cache=True)
def reward_sum(sel_ptr, sel_pos, cand, scores, q, phi, p, eps):
    n = sel_ptr.shape[0] - 1
    k_arms = p.shape[0]
    total = np.zeros(k_arms)
    used = 0
    bad = -1
    for i in range(n):
        lo = sel_ptr[i]
        hi = sel_ptr[i + 1]
        if hi == lo:
            continue
        used += 1
        logits = np.empty(hi - lo)
        top = -np.inf
        for t in range(lo, hi):
            logits[t - lo] = 1.0 / (abs(scores[i] - scores[cand[sel_pos[t]]]) + eps)
            if logits[t - lo] > top:
                top = logits[t - lo]
        z = 0.0
        for t in range(hi - lo):
            logits[t] = np.exp(logits[t] - top)
            z += logits[t]
        for t in range(lo, hi):
            e = sel_pos[t]
            if phi[e] <= 0.0:
                bad = e
                continue
            c = logits[t - lo] / z
            for k in range(k_arms):
                total[k] += c * p[k] * q[e, k] / phi[e]
    return total, used, bad
