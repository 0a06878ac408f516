"""Input validation helpers shared by the solvers, environments and planners."""

import numpy as np


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


class NumericalError(ArithmeticError):
    """Raised when a solver produces non-finite intermediate values."""


def check_probability_vector(p, name="distribution", atol=1e-9):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValidationError(f"{name} must be a non-empty 1-D array, got shape {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValidationError(f"{name} must be finite and nonnegative")
    if abs(p.sum() - 1.0) > atol:
        raise ValidationError(f"{name} must sum to 1 (sums to {p.sum():.12g})")
    return p


def check_cost_matrix(cost, name="cost"):
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or 0 in cost.shape:
        raise ValidationError(f"{name} must be a non-empty 2-D array, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ValidationError(f"{name} entries must be finite")
    if np.any(cost < 0):
        raise ValidationError(f"{name} entries must be nonnegative")
    return cost


def check_index(i, n, name="index"):
    """Return ``i`` as a Python int, raising IndexError when outside ``[0, n)``."""
    if isinstance(i, (bool, np.bool_)) or not isinstance(i, (int, np.integer)):
        raise IndexError(f"{name} must be an integer, got {i!r}")
    if not 0 <= i < n:
        raise IndexError(f"{name} {i} out of range [0, {n})")
    return int(i)


def check_random_state(seed):
    """Turn ``seed`` into a ``np.random.Generator``.

    Accepts None, an int, a SeedSequence or an existing Generator (returned as is).
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
