"""Episode metrics: minimal prefix Wasserstein-1 distance and ordered goal fraction."""

from dataclasses import dataclass, field

import numpy as np

from .ot import OtProblem, transport_simplex

__all__ = ["TaskResult", "achieved_matrix", "w_min", "w1_prefix_curve", "goal_fraction"]


def achieved_matrix(gs, states, goals):
    """Boolean matrix of ``h(phi(s), g) < epsilon`` over states x goals."""
    return gs.state_goal_metric(states, goals) < gs.epsilon


def _merge_atoms(coords):
    """Unique rows of ``coords`` and their empirical weights."""
    uniq, counts = np.unique(coords, axis=0, return_counts=True)
    return uniq, counts / counts.sum()


def w1_prefix_curve(traj, goals, gs):
    """Exact W1 between each trajectory prefix and the goal sequence.

    Entry ``k`` compares the uniform measure on ``phi(s_0..s_k)`` with the
    uniform measure on the goals, under the goal metric. Identical atoms are
    merged before solving, which leaves W1 unchanged.
    """
    src = gs.state_coords(traj)
    tgt, b = _merge_atoms(gs.goal_coords_of(goals))
    out = np.empty(len(src))
    for k in range(len(src)):
        atoms, a = _merge_atoms(src[: k + 1])
        C = np.linalg.norm(atoms[:, None, :] - tgt[None, :, :], axis=-1)
        out[k] = transport_simplex(OtProblem(C, a, b)).cost
    return out


def w_min(traj, goals, gs):
    """Minimum over prefixes ``k`` of the exact W1 to the goal sequence."""
    if len(traj) == 0 or len(goals) == 0:
        raise ValueError("w_min needs a nonempty trajectory and goal list")
    return float(max(w1_prefix_curve(traj, goals, gs).min(), 0.0))


def goal_fraction(traj, goals, gs):
    """Fraction of goals achieved in the given order.

    A pointer starts at the first goal; every visited state advances it for as
    long as the state achieves the goal under the pointer.
    """
    if len(traj) == 0 or len(goals) == 0:
        raise ValueError("goal_fraction needs a nonempty trajectory and goal list")
    hit = achieved_matrix(gs, traj, goals)
    j = 0
    M = len(goals)
    for row in hit:
        while j < M and row[j]:
            j += 1
        if j == M:
            break
    return j / M


def _jsonable_state(s):
    if isinstance(s, np.ndarray):
        return s.tolist()
    if isinstance(s, np.integer):
        return int(s)
    return s


@dataclass
class TaskResult:
    """Outcome of one episode: trajectory, metrics and per-step diagnostics."""

    trajectory: list
    goals: list
    w_min: float
    goal_fraction: float
    diagnostics: list = field(default_factory=list)
    seed: int = None
    wall_time: float = 0.0
    planner: str = ""

    @property
    def n_steps(self):
        return len(self.trajectory) - 1

    def to_dict(self, include_wall_time=False):
        d = {
            "planner": self.planner,
            "seed": self.seed,
            "trajectory": [_jsonable_state(s) for s in self.trajectory],
            "goals": [_jsonable_state(g) for g in self.goals],
            "w_min": self.w_min,
            "goal_fraction": self.goal_fraction,
            "n_steps": self.n_steps,
            "diagnostics": self.diagnostics,
        }
        if include_wall_time:
            d["wall_time"] = self.wall_time
        return d


def score(traj, goals, gs, **kw):
    """Build a :class:`TaskResult` with both metrics computed."""
    return TaskResult(list(traj), list(goals), w_min(traj, goals, gs), goal_fraction(traj, goals, gs), **kw)
