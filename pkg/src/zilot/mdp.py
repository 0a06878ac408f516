"""Controllable Markov chains with a goal abstraction.

States, actions and goals are dense integer indices. A :class:`GoalSpace` maps
every state onto a goal index and carries the coordinates used by the goal
metric, so ``h(phi(s), g)`` is a table lookup followed by a norm.
"""

from dataclasses import dataclass, field
import hashlib
import json

import numpy as np
from scipy import sparse

from ._validation import (
    ValidationError,
    check_index,
    check_probability_vector,
    check_random_state,
)

__all__ = [
    "TabularEnv",
    "GoalSpace",
    "EnvTaskConfig",
    "goal_achieved",
    "sample_transition",
    "rollout",
    "perturb_model",
]


def _freeze(a):
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TabularEnv:
    """Finite controllable Markov chain.

    Parameters
    ----------
    transitions : array-like of shape (n_states, n_actions, n_states)
        ``transitions[s, a]`` is the next-state distribution.
    initial_dist : array-like of shape (n_states,)
    labels : sequence of str, optional
        Human-readable state names, used only for display and JSON dumps.
    name : str
    """

    transitions: np.ndarray
    initial_dist: np.ndarray
    labels: tuple = None
    name: str = "tabular"
    _cdf: np.ndarray = field(init=False, repr=False)
    _next: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        P = np.array(self.transitions, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2] or 0 in P.shape:
            raise ValidationError(
                f"transitions must have shape (n_states, n_actions, n_states), got {P.shape}"
            )
        if not np.all(np.isfinite(P)) or np.any(P < 0):
            raise ValidationError("transition probabilities must be finite and nonnegative")
        row_err = np.abs(P.sum(axis=2) - 1.0)
        if row_err.max() > 1e-12:
            s, a = np.unravel_index(row_err.argmax(), row_err.shape)
            raise ValidationError(f"transition row ({s}, {a}) does not sum to 1")
        mu = check_probability_vector(self.initial_dist, "initial_dist", atol=1e-12).copy()
        if mu.size != P.shape[0]:
            raise ValidationError("initial_dist length must equal n_states")
        labels = self.labels
        if labels is not None:
            labels = tuple(str(x) for x in labels)
            if len(labels) != P.shape[0]:
                raise ValidationError("labels must have one entry per state")

        # Inverse-CDF table; entries from the last supported state on are pinned
        # to exactly 1 so round-off never selects a zero-probability successor.
        cdf = np.cumsum(P, axis=2)
        n = P.shape[2]
        last = n - 1 - np.argmax(P[..., ::-1] > 0, axis=2)
        cdf[np.arange(n)[None, None, :] >= last[..., None]] = 1.0

        nxt = np.full(P.shape[:2], -1, dtype=np.int64)
        point = P.max(axis=2) == 1.0
        nxt[point] = P.argmax(axis=2)[point]

        object.__setattr__(self, "transitions", _freeze(P))
        object.__setattr__(self, "initial_dist", _freeze(mu))
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "_cdf", _freeze(cdf))
        object.__setattr__(self, "_next", _freeze(nxt))

    @property
    def n_states(self):
        return self.transitions.shape[0]

    @property
    def n_actions(self):
        return self.transitions.shape[1]

    @property
    def is_deterministic(self):
        return bool(np.all(self._next >= 0))

    def label(self, s):
        return self.labels[s] if self.labels is not None else str(s)

    def reset(self, rng=None):
        rng = check_random_state(rng)
        return self._draw(self.initial_dist.cumsum(), rng.random())

    def step(self, s, a, rng=None):
        return sample_transition(self, s, a, rng)

    @staticmethod
    def _draw(cdf, u):
        return int(min(np.searchsorted(cdf, u, side="right"), cdf.size - 1))

    def rollout_batch(self, s0, actions, uniforms):
        """Roll out many action sequences from ``s0`` with shared noise.

        ``actions`` has shape (batch, length); ``uniforms`` has shape (length,)
        and supplies the inverse-CDF draw for each step, identical across the
        batch (common random numbers). Returns states of shape (batch, length).
        """
        actions = np.asarray(actions, dtype=np.int64)
        B, L = actions.shape
        out = np.empty((B, L), dtype=np.int64)
        s = np.full(B, int(s0), dtype=np.int64)
        det = self.is_deterministic
        for t in range(L):
            if det:
                s = self._next[s, actions[:, t]]
            else:
                s = (self._cdf[s, actions[:, t]] <= uniforms[t]).sum(axis=1)
                np.minimum(s, self.n_states - 1, out=s)
            out[:, t] = s
        return out

    def transition_matrix(self):
        """Sparse ``(n_states * n_actions, n_states)`` view of the dynamics."""
        S, A, _ = self.transitions.shape
        return sparse.csr_matrix(self.transitions.reshape(S * A, S))

    def fingerprint(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.transitions).tobytes())
        h.update(np.ascontiguousarray(self.initial_dist).tobytes())
        return h.hexdigest()


@dataclass(frozen=True, eq=False)
class GoalSpace:
    """Goal abstraction, goal metric and achievement threshold.

    ``abstraction[s]`` is the goal index of state ``s``; ``goal_coords[g]`` are
    the coordinates of goal ``g`` under which the Euclidean metric is taken.
    """

    abstraction: np.ndarray
    goal_coords: np.ndarray
    epsilon: float

    def __post_init__(self):
        phi = np.array(self.abstraction, dtype=np.int64)
        coords = np.array(self.goal_coords, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        if phi.ndim != 1 or phi.size == 0:
            raise ValidationError("abstraction must be a non-empty 1-D array")
        if coords.ndim != 2 or coords.shape[0] == 0:
            raise ValidationError("goal_coords must be a non-empty (n_goals, dim) array")
        if phi.min() < 0 or phi.max() >= coords.shape[0]:
            raise ValidationError("abstraction maps a state outside the goal table")
        if not np.isfinite(self.epsilon) or self.epsilon <= 0:
            raise ValidationError("epsilon must be a positive finite number")
        object.__setattr__(self, "abstraction", _freeze(phi))
        object.__setattr__(self, "goal_coords", _freeze(coords))
        object.__setattr__(self, "epsilon", float(self.epsilon))

    @property
    def n_goals(self):
        return self.goal_coords.shape[0]

    @property
    def n_states(self):
        return self.abstraction.size

    def abstract(self, states):
        return self.abstraction[np.asarray(states, dtype=np.int64)]

    def state_coords(self, states):
        """Goal-space coordinates of ``phi(s)`` for each state."""
        return self.goal_coords[self.abstract(states)]

    def goal_coords_of(self, goals):
        return self.goal_coords[np.asarray(goals, dtype=np.int64)]

    def metric_matrix(self, goals_a, goals_b):
        """Pairwise goal metric between two goal-index arrays."""
        xa = self.goal_coords[np.asarray(goals_a, dtype=np.int64)]
        xb = self.goal_coords[np.asarray(goals_b, dtype=np.int64)]
        return np.linalg.norm(xa[:, None, :] - xb[None, :, :], axis=-1)

    def metric(self, g1, g2):
        return float(np.linalg.norm(self.goal_coords[g1] - self.goal_coords[g2]))

    def state_goal_metric(self, states, goals):
        """Matrix of ``h(phi(s), g)`` for every state/goal pair."""
        return self.metric_matrix(self.abstract(states), goals)

    def achievement_mask(self):
        """Boolean (n_states, n_goals) table of ``h(phi(s), g) < epsilon``."""
        return self.state_goal_metric(np.arange(self.n_states), np.arange(self.n_goals)) < self.epsilon

    def preimage(self, g):
        return np.flatnonzero(self.abstraction == g)

    def goal_index(self, coords):
        """Index of the goal whose coordinates equal ``coords``."""
        c = np.atleast_1d(np.asarray(coords, dtype=float))
        if c.shape != self.goal_coords.shape[1:]:
            raise ValidationError(f"goal has dimension {c.size}, expected {self.goal_coords.shape[1]}")
        hits = np.flatnonzero(np.all(np.isclose(self.goal_coords, c, atol=1e-9), axis=1))
        if hits.size == 0:
            raise ValidationError(f"no goal with coordinates {c.tolist()}")
        return int(hits[0])

    def fingerprint(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.abstraction).tobytes())
        h.update(np.ascontiguousarray(self.goal_coords).tobytes())
        h.update(repr(self.epsilon).encode())
        return h.hexdigest()


@dataclass(frozen=True)
class EnvTaskConfig:
    """Planning horizon, episode cap and the demonstration goal sequence."""

    horizon: int
    t_max: int
    goals: tuple

    def __post_init__(self):
        if not 1 <= self.horizon <= self.t_max:
            raise ValidationError(f"need 1 <= horizon <= t_max, got {self.horizon}, {self.t_max}")
        goals = tuple(self.goals)
        if len(goals) == 0:
            raise ValidationError("goal sequence must be nonempty")
        object.__setattr__(self, "goals", goals)

    @property
    def n_goals(self):
        return len(self.goals)


def goal_achieved(s, g, gs):
    """True when ``h(phi(s), g) < epsilon`` (strict)."""
    s = check_index(s, gs.n_states, "state")
    g = check_index(g, gs.n_goals, "goal")
    return gs.metric(gs.abstraction[s], g) < gs.epsilon


def sample_transition(env, s, a, rng=None):
    """Draw ``s' ~ P(s, a)``, consuming exactly one uniform from ``rng``."""
    s = check_index(s, env.n_states, "state")
    a = check_index(a, env.n_actions, "action")
    rng = check_random_state(rng)
    return env._draw(env._cdf[s, a], rng.random())


def rollout(env, s0, actions, rng=None):
    """Return ``s_1..s_L`` obtained by executing ``actions`` from ``s0``."""
    rng = check_random_state(rng)
    out = []
    s = s0
    for a in actions:
        s = sample_transition(env, s, a, rng)
        out.append(s)
    return out


def perturb_model(env, noise=0.0):
    """Mix every transition row with the uniform distribution at rate ``noise``.

    Used as a deliberately wrong planning model; ``noise=0`` returns ``env``.
    """
    if not 0.0 <= noise <= 1.0:
        raise ValidationError("noise must lie in [0, 1]")
    if noise == 0.0:
        return env
    P = (1.0 - noise) * env.transitions + noise / env.n_states
    P /= P.sum(axis=2, keepdims=True)
    return TabularEnv(P, env.initial_dist, env.labels, name=f"{env.name}+noise{noise:g}")


def env_to_dict(env, gs):
    return {
        "name": env.name,
        "n_states": env.n_states,
        "n_actions": env.n_actions,
        "transitions": env.transitions.tolist(),
        "initial_dist": env.initial_dist.tolist(),
        "abstraction": gs.abstraction.tolist(),
        "goal_coords": gs.goal_coords.tolist(),
        "epsilon": gs.epsilon,
        "labels": list(env.labels) if env.labels is not None else None,
    }


def env_from_dict(d):
    """Build ``(TabularEnv, GoalSpace)`` from an environment-definition mapping.

    ``abstraction`` defaults to the identity when ``goal_coords`` has one row
    per state.
    """
    try:
        P = np.asarray(d["transitions"], dtype=float)
        coords = np.asarray(d["goal_coords"], dtype=float)
        eps = d["epsilon"]
        mu = d["initial_dist"]
    except KeyError as exc:
        raise ValidationError(f"environment definition missing field {exc}") from None
    if "n_states" in d and P.shape[0] != d["n_states"]:
        raise ValidationError("n_states does not match transitions")
    if "n_actions" in d and P.ndim == 3 and P.shape[1] != d["n_actions"]:
        raise ValidationError("n_actions does not match transitions")
    phi = d.get("abstraction")
    if phi is None:
        if coords.shape[0] != P.shape[0]:
            raise ValidationError("abstraction is required unless goals coincide with states")
        phi = np.arange(P.shape[0])
    env = TabularEnv(P, mu, d.get("labels"), name=d.get("name", "tabular"))
    gs = GoalSpace(phi, coords, eps)
    if gs.n_states != env.n_states:
        raise ValidationError("abstraction must have one entry per state")
    return env, gs


def dump_env_json(env, gs, **kw):
    return json.dumps(env_to_dict(env, gs), **kw)
