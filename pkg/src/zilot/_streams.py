"""Counter-based random streams for episodes."""

import numpy as np


def episode_streams(seed):
    """Independent generators for the reset draw, the environment and planning step ``k``.

    Streams are derived by counter from ``seed`` so results never depend on
    evaluation order.
    """
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)

    def stream(*key):
        return np.random.default_rng(np.random.SeedSequence(root.entropy, spawn_key=tuple(root.spawn_key) + key))

    return stream(0), stream(1), (lambda k: stream(2, k))


def as_seed(rng):
    """Seeds pass through; a Generator is turned into a fresh integer seed."""
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(2**63))
    return rng


def to_list(x):
    return x.tolist() if isinstance(x, np.ndarray) else x
