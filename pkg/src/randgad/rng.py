"""Named random sub-streams derived from one 64-bit seed."""

import numpy as np

STREAMS = {"inject": 1, "init": 2, "sampling": 3, "pool": 4, "data": 5}


def stream(seed, name):
    """Independent generator for component ``name`` under ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), STREAMS[name]]))
