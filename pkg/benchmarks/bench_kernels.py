"""Time the numba and pure-numpy kernel backends on the same inputs.

    python3 benchmarks/bench_kernels.py [--n 2708] [--repeat 5]

Prints the best wall-clock of ``--repeat`` calls per kernel and backend
(numba timings exclude the first, compiling call) and checks that both
backends return the same values.
"""

import argparse
import time

import numpy as np

from randgad import kernels
from randgad.datasets import make_clustered_graph
from randgad.pool import PoolConfig, build_pool


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2708)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    g = make_clustered_graph(n=args.n, clusters=7, d=200, words=18, seed=args.seed)
    a = g.adjacency
    indptr, indices = a.indptr.astype(np.int64), a.indices.astype(np.int64)
    rng = np.random.default_rng(args.seed)
    pool = build_pool(g, PoolConfig(), rng)
    p = np.full(pool.K, 1.0 / pool.K)
    phi = pool.mixture(p)
    u = 1.0 - rng.random(phi.size)
    scores = rng.random(g.n)
    sel_ptr, sel_pos = kernels.backend("numpy").sample_by_keys(pool.indptr, phi, u, 20)

    cases = {
        "ppr_topk": lambda b: b.ppr_topk(indptr, indices, 0.15, 1e-5, 10),
        "sample_by_keys": lambda b: b.sample_by_keys(pool.indptr, phi, u, 20),
        "reward_sum": lambda b: b.reward_sum(sel_ptr, sel_pos, pool.indices, scores, pool.q, phi, p, 1e-6),
    }
    print(f"n={g.n} edges={g.num_edges} pool entries={pool.indices.size} repeat={args.repeat}")
    print(f"{'kernel':<16}{'numpy s':>12}{'numba s':>12}{'speedup':>10}  same")
    for name, call in cases.items():
        np_backend, nb_backend = kernels.backend("numpy"), kernels.backend("numba")
        call(nb_backend)  # compile
        t_np, out_np = best_of(lambda: call(np_backend), args.repeat)
        t_nb, out_nb = best_of(lambda: call(nb_backend), args.repeat)
        same = all(np.allclose(x, y, rtol=1e-10, atol=1e-12) for x, y in zip(out_np, out_nb))
        print(f"{name:<16}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.1f}  {same}")


if __name__ == "__main__":
    main()
