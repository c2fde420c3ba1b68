import numpy as np


def make_rng(seed):
    """Counter-based generator (Philox) keyed by an explicit integer seed."""
    if seed is None or int(seed) < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed!r}")
    return np.random.Generator(np.random.Philox(int(seed)))
