"""Exact goal-conditioned first-hit times by value iteration.

``d(s, g)`` is the expected number of steps the optimal goal-reaching policy
needs before ``h(phi(s), g) < epsilon`` holds, capped at ``t_max`` so that
unreachable goals stay finite.
"""

from dataclasses import dataclass
import hashlib
import os

import numpy as np

from ._validation import ValidationError

__all__ = [
    "DistanceTable",
    "GoalPairTable",
    "compute_first_hit_distance",
    "compute_goal_pair_times",
    "greedy_goal_policy",
    "expected_successor_distance",
    "TableCache",
]

VI_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DistanceTable:
    values: np.ndarray  # (n_states, n_goals)
    t_max: float
    n_sweeps: int = 0
    converged: bool = True

    def __post_init__(self):
        self.values.setflags(write=False)

    def pairwise(self, states, goals):
        return self.values[np.ix_(np.asarray(states, dtype=np.int64), np.asarray(goals, dtype=np.int64))]

    def __call__(self, s, g):
        return float(self.values[s, g])


@dataclass(frozen=True, eq=False)
class GoalPairTable:
    values: np.ndarray  # (n_goals, n_goals)
    t_max: float

    def __post_init__(self):
        self.values.setflags(write=False)

    def __call__(self, g1, g2):
        return float(self.values[g1, g2])


def expected_successor_distance(env, values):
    """``E_{s' ~ P(s, a)}[values(s', g)]`` as an (n_states, n_actions, n_goals) array."""
    S, A = env.n_states, env.n_actions
    return np.asarray(env.transition_matrix() @ values).reshape(S, A, -1)


def compute_first_hit_distance(env, gs, t_max, callback=None):
    """Value iteration for the expected first hit time of every goal.

    Starts from zero and applies ``d <- min(t_max, min_a 1 + E[d(s', g)])`` on
    non-achieving states (achieving states are held at 0) until the sup-norm
    change drops below 1e-10 or ``10 * t_max`` sweeps have run. Iterates are
    pointwise nondecreasing. ``callback(sweep, values)`` sees each iterate.
    """
    if t_max < 1:
        raise ValidationError("t_max must be at least 1")
    if gs.n_states != env.n_states:
        raise ValidationError("goal space and environment disagree on n_states")
    S, A, G = env.n_states, env.n_actions, gs.n_goals
    achieved = gs.achievement_mask()
    P = env.transition_matrix()
    D = np.zeros((S, G))
    max_sweeps = int(10 * t_max)
    converged = False
    sweep = 0
    while sweep < max_sweeps:
        sweep += 1
        Q = 1.0 + np.asarray(P @ D).reshape(S, A, G)
        new = np.minimum(Q.min(axis=1), t_max)
        new[achieved] = 0.0
        delta = np.max(np.abs(new - D))
        D = new
        if callback is not None:
            callback(sweep, D.copy())
        if delta < VI_TOL:
            converged = True
            break
    return DistanceTable(D, float(t_max), n_sweeps=sweep, converged=converged)


def compute_goal_pair_times(d, gs):
    """Goal-to-goal travel times: mean of ``d(s, g')`` over the pre-image of ``g``.

    Goals with an empty pre-image get ``t_max`` in every column.
    """
    G = gs.n_goals
    W = np.full((G, G), d.t_max)
    counts = np.bincount(gs.abstraction, minlength=G)
    sums = np.zeros((G, G))
    np.add.at(sums, gs.abstraction, d.values)
    nonempty = counts > 0
    W[nonempty] = sums[nonempty] / counts[nonempty, None]
    return GoalPairTable(W, d.t_max)


def greedy_goal_policy(env, d, tol=1e-9):
    """``pi(s, g) = argmin_a E[d(s', g)]``, ties to the lowest action index."""
    E = expected_successor_distance(env, d.values)
    best = E.min(axis=1, keepdims=True)
    return np.argmax(E <= best + tol, axis=1)


class TableCache:
    """On-disk cache of distance and goal-pair tables.

    Entries are ``.npz`` files keyed by the environment dynamics, the goal space
    (including epsilon) and ``t_max``.
    """

    def __init__(self, directory):
        self.directory = os.fspath(directory)

    def key(self, env, gs, t_max):
        h = hashlib.sha256()
        h.update(env.fingerprint().encode())
        h.update(gs.fingerprint().encode())
        h.update(repr(float(t_max)).encode())
        return h.hexdigest()[:32]

    def path(self, env, gs, t_max):
        return os.path.join(self.directory, f"tables-{self.key(env, gs, t_max)}.npz")

    def load(self, env, gs, t_max):
        path = self.path(env, gs, t_max)
        if not os.path.exists(path):
            return None
        with np.load(path) as z:
            d = DistanceTable(z["d"].copy(), float(z["t_max"]), int(z["n_sweeps"]), bool(z["converged"]))
            w = GoalPairTable(z["w"].copy(), float(z["t_max"]))
        return d, w

    def store(self, env, gs, t_max, d, w):
        os.makedirs(self.directory, exist_ok=True)
        path = self.path(env, gs, t_max)
        tmp = path + ".tmp.npz"
        np.savez(tmp, d=d.values, w=w.values, t_max=d.t_max, n_sweeps=d.n_sweeps, converged=d.converged)
        os.replace(tmp, path)

    def get(self, env, gs, t_max):
        hit = self.load(env, gs, t_max)
        if hit is not None:
            return hit
        d = compute_first_hit_distance(env, gs, t_max)
        w = compute_goal_pair_times(d, gs)
        self.store(env, gs, t_max, d, w)
        return d, w
