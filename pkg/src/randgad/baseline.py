"""Attribute-only MLP autoencoder, kept as a sanity reference."""

import numpy as np

from . import autodiff as ad
from .rng import stream


def mlp_autoencoder_scores(x, hidden=64, epochs=100, lr=5e-3, seed=0):
    """Per-node squared reconstruction error of a one-hidden-layer tanh autoencoder."""
    x = np.asarray(x, dtype=np.float64)
    rng = stream(seed, "init")
    w1 = ad.xavier_init(x.shape[1], hidden, rng, "w1")
    w2 = ad.xavier_init(hidden, x.shape[1], rng, "w2")
    params = [w1, w2]
    opt = ad.OptimizerState(lr=lr)
    n = x.shape[0]
    for _ in range(epochs):
        rows = ad.sqdist_rows(ad.matmul(ad.tanh(ad.matmul(x, w1)), w2), x)
        ad.backward(ad.scale(ad.sum(rows), 1.0 / n), params)
        ad.adam_step(params, opt)
    recon = np.tanh(x @ w1.data) @ w2.data
    return ((x - recon) ** 2).sum(axis=1)
