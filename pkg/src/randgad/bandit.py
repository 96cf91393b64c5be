"""Adversarial multi-armed bandit over neighborhood strategies.

Weights grow multiplicatively with a consistency-based reward plus an
exploration bonus inversely proportional to each arm's probability;
probabilities are the normalized weights mixed with a floor ``p_min``.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import ArgumentError, ConsistencyError, NumericError

CONSISTENCY_EPS = 1e-6


@dataclass(frozen=True)
class BanditState:
    K: int
    p_min: float = 0.05
    delta1: float = 1.0
    delta2: float = 0.1
    T: int = 5
    U: int = 3
    t: int = 0
    w: np.ndarray = field(default=None, repr=False)
    p: np.ndarray = field(default=None)

    def check(self, tol=1e-9):
        if abs(self.p.sum() - 1.0) > tol:
            raise NumericError(f"probabilities sum to {self.p.sum()!r}")
        if np.any(self.p < self.p_min - tol):
            raise NumericError(f"probability below floor: {self.p}")
        if not np.all(np.isfinite(self.w)) or np.any(self.w <= 0):
            raise NumericError(f"invalid weights: {self.w}")


def init_bandit(K, p_min=0.05, delta1=1.0, delta2=0.1, T=5, U=3):
    if K < 1:
        raise ArgumentError("need at least one strategy")
    if K * p_min >= 1:
        raise ArgumentError(f"K * p_min = {K * p_min} must be < 1")
    if p_min < 0 or delta2 <= 0 or T < 1 or U < 0:
        raise ArgumentError("invalid bandit hyper-parameters")
    return BanditState(
        K=K, p_min=p_min, delta1=delta1, delta2=delta2, T=T, U=U, t=0,
        w=np.ones(K), p=np.full(K, 1.0 / K),
    )


def consistency(scores, i, neighbors, eps=CONSISTENCY_EPS):
    """Softmax over neighbors of 1 / (|y_i - y_j| + eps)."""
    neighbors = np.asarray(neighbors, dtype=np.int64)
    if neighbors.size == 0:
        return np.zeros(0)
    logits = 1.0 / (np.abs(scores[i] - scores[neighbors]) + eps)
    e = np.exp(logits - logits.max())
    return e / e.sum()


def reward(state, pool, scores, phi, eps=CONSISTENCY_EPS):
    """Per-strategy reward from the pool's cached selections.

    r_k = mean over centers with a non-empty neighborhood of
    sum_j C_i(j) * p_k * Q_k(i->j) / Phi_i(j).
    """
    if pool.sel_ptr is None:
        raise ConsistencyError("pool has no sampled neighborhoods")
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise NumericError("non-finite anomaly scores")
    total, used, bad = kernels.reward_sum(
        pool.sel_ptr, pool.sel_pos, pool.indices, scores, pool.q,
        np.ascontiguousarray(phi), np.ascontiguousarray(state.p), float(eps),
    )
    if bad >= 0:
        raise ConsistencyError(f"selected candidate at entry {bad} has zero mixture mass")
    if used == 0:
        return np.zeros(state.K)
    return total / used


def learning_rate(state, n):
    return state.delta1 * np.sqrt(np.log(n / state.delta2) / (state.K * state.T))


def update_weights(state, r, n):
    """Exponential weight update, then rescale so the largest weight is 1."""
    r = np.asarray(r, dtype=np.float64)
    expo = (state.p_min / 2.0) * (r + 1.0 / state.p) * learning_rate(state, n)
    if not np.all(np.isfinite(expo)):
        raise NumericError(f"non-finite weight exponent {expo} (state={state})")
    w = state.w * np.exp(expo)
    w = w / w.max()
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise NumericError(f"weight underflow {w} (state={state})")
    return replace(state, w=w)


def update_probs(state):
    p = (1.0 - state.K * state.p_min) * state.w / state.w.sum() + state.p_min
    return replace(state, p=p)


def step(state, r, n):
    """One bandit round: weights, then probabilities."""
    return update_probs(update_weights(state, r, n))


def due(state, epoch):
    """Whether a reward/update round runs at ``epoch``."""
    return epoch >= state.U and (epoch - state.U) % state.T == 0
