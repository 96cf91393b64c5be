"""Hot loops: PPR push, keyed sampling without replacement, bandit reward.

The numba backend is used when importable; set ``RAND_GAD_NO_NUMBA=1``
to force the pure-numpy path. Both backends take and return plain
arrays with identical layouts.
"""

import os

from . import _numpy

BACKEND = "numpy"
_impl = _numpy

if os.environ.get("RAND_GAD_NO_NUMBA", "").strip().lower() not in ("1", "true", "yes"):
    try:
        from . import _numba

        _impl = _numba
        BACKEND = "numba"
    except ImportError:  # pragma: no cover
        pass


def backend(name=None):
    """Module implementing the kernels for ``name`` (default: active backend)."""
    if name is None:
        return _impl
    if name == "numpy":
        return _numpy
    if name == "numba":
        from . import _numba

        return _numba
    raise ValueError(f"unknown kernel backend {name!r}")


def set_threads(count):
    """Cap numba worker threads (no-op on the numpy path)."""
    if BACKEND == "numba" and count:
        import numba

        numba.set_num_threads(max(1, min(int(count), numba.config.NUMBA_NUM_THREADS)))


if os.environ.get("RAND_GAD_THREADS"):
    set_threads(os.environ["RAND_GAD_THREADS"])


def ppr_topk(indptr, indices, alpha, tol, top):
    return _impl.ppr_topk(indptr, indices, alpha, tol, top)


def sample_by_keys(indptr, phi, u, m):
    return _impl.sample_by_keys(indptr, phi, u, m)


def reward_sum(sel_ptr, sel_pos, cand, scores, q, phi, p, eps):
    return _impl.reward_sum(sel_ptr, sel_pos, cand, scores, q, phi, p, eps)
