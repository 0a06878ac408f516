"""Built-in environments.

``build_chain`` is the four-state counterexample on which goal-by-goal
planners are provably myopic. ``build_maze`` and ``build_slippery`` are grid
analogues of a waypoint maze and of a puck that can be launched out of the
agent's reach. ``build_pointmass`` is a continuous box used to exercise iCEM.
"""

from collections import deque
from dataclasses import dataclass
import numpy as np

from ._validation import ValidationError
from .mdp import GoalSpace, TabularEnv

__all__ = [
    "build_chain",
    "build_maze",
    "build_slippery",
    "build_pointmass",
    "PointMassEnv",
    "PointMassGoalSpace",
    "AnalyticDistance",
    "MOVES",
    "ENV_BUILDERS",
    "build_env",
]

# up, down, left, right, stay
MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1), (0, 0))


def build_chain(p=0.5):
    """Four-state chain ``(0,0) (1,0) (1,1) (2,1)`` with ``phi(x, y) = x``.

    From ``(0,0)``, ``a0`` moves to ``(1,0)`` and ``a1`` stays with probability
    ``p`` or moves to ``(1,1)`` otherwise. ``(1,1)`` leads to the absorbing
    ``(2,1)``; ``(1,0)`` is absorbing. Outside ``(0,0)``, ``a1`` acts like ``a0``.
    """
    if not 0.0 <= p < 1.0:
        raise ValidationError("p must lie in [0, 1)")
    P = np.zeros((4, 2, 4))
    P[0, 0, 1] = 1.0
    P[0, 1, 0] = p
    P[0, 1, 2] = 1.0 - p
    P[1, :, 1] = 1.0
    P[2, :, 3] = 1.0
    P[3, :, 3] = 1.0
    labels = ("(0,0)", "(1,0)", "(1,1)", "(2,1)")
    env = TabularEnv(P, [1.0, 0.0, 0.0, 0.0], labels, name=f"chain(p={p:g})")
    gs = GoalSpace([0, 1, 1, 2], [[0.0], [1.0], [2.0]], 0.5)
    return env, gs


def _parse_bitmap(walls):
    if isinstance(walls, str):
        walls = [row for row in walls.strip().splitlines()]
    rows = []
    for row in walls:
        if isinstance(row, str):
            rows.append([ch in "#1X" for ch in row.strip()])
        else:
            rows.append([bool(x) for x in row])
    grid = np.array(rows, dtype=bool)
    if grid.ndim != 2 or 0 in grid.shape:
        raise ValidationError("wall bitmap must be a non-empty rectangle")
    return grid


def _connected(free, cells):
    start = cells[0]
    seen = {start}
    queue = deque([start])
    H, W = free.shape
    while queue:
        r, c = queue.popleft()
        for dr, dc in MOVES[:4]:
            nr, nc = r + dr, c + dc
            if 0 <= nr < H and 0 <= nc < W and free[nr, nc] and (nr, nc) not in seen:
                seen.add((nr, nc))
                queue.append((nr, nc))
    return len(seen) == len(cells)


def build_maze(walls, start=None, epsilon=0.5, connectivity=4):
    """Deterministic grid maze; goals are cells under the identity abstraction.

    Parameters
    ----------
    walls : str or 2-D array-like
        ``'#'`` (or truthy) marks a wall. Outside the bitmap is a wall too.
    start : (row, col), optional
        Start cell; defaults to the first free cell in row-major order.

    Actions are up, down, left, right and stay; blocked moves leave the agent
    in place. Goal coordinates are ``(row, col)`` and the metric is Euclidean.
    """
    if connectivity != 4:
        raise ValidationError("only 4-connectivity is supported")
    free = ~_parse_bitmap(walls)
    H, W = free.shape
    cells = [(r, c) for r in range(H) for c in range(W) if free[r, c]]
    if not cells:
        raise ValidationError("maze has no free cell")
    if not _connected(free, cells):
        raise ValidationError("maze free space must be connected")
    index = {cell: i for i, cell in enumerate(cells)}
    start = tuple(start) if start is not None else cells[0]
    if start not in index:
        raise ValidationError(f"start cell {start} is inside a wall or outside the grid")
    n = len(cells)
    P = np.zeros((n, len(MOVES), n))
    for i, (r, c) in enumerate(cells):
        for a, (dr, dc) in enumerate(MOVES):
            nxt = (r + dr, c + dc)
            P[i, a, index.get(nxt, i)] = 1.0
    mu = np.zeros(n)
    mu[index[start]] = 1.0
    env = TabularEnv(P, mu, [f"{r},{c}" for r, c in cells], name="maze")
    gs = GoalSpace(np.arange(n), np.array(cells, dtype=float), epsilon)
    return env, gs


def build_slippery(width, height, agent_band, friction=1, puck_start=None, agent_starts=None, epsilon=0.5):
    """Grid with an agent confined to a band of columns and a sliding puck.

    The joint state is ``(agent cell, puck cell)``. Moving into the puck pushes
    it up to ``friction`` cells in the move direction (stopping at the border)
    and the agent follows into the puck's old cell; a puck against the border
    does not move and blocks the agent. The agent can never leave
    ``agent_band``, so a puck that slides past the band can no longer be
    touched. Goals are puck cells ``(row, col)`` with the Euclidean metric.

    Parameters
    ----------
    width, height : int
    agent_band : iterable of int
        Columns the agent may occupy; must be a strict subset of ``range(width)``.
    friction : int
        Slide length of a push.
    puck_start : (row, col)
    agent_starts : list of (row, col), optional
        Initial agent cells, drawn uniformly. Defaults to all band cells except
        the puck's.
    """
    band = sorted(set(int(c) for c in agent_band))
    if not band or band[0] < 0 or band[-1] >= width or len(band) >= width:
        raise ValidationError("agent_band must be a nonempty strict subset of the columns")
    if friction < 1:
        raise ValidationError("friction must be >= 1")
    if width < 2 or height < 1:
        raise ValidationError("grid too small")
    band_set = set(band)
    cells = [(r, c) for r in range(height) for c in range(width)]
    cell_index = {cell: i for i, cell in enumerate(cells)}
    agent_cells = [(r, c) for (r, c) in cells if c in band_set]
    states = [(ag, pk) for ag in agent_cells for pk in cells if ag != pk]
    state_index = {st: i for i, st in enumerate(states)}
    puck_start = tuple(puck_start) if puck_start is not None else (height // 2, band[len(band) // 2])
    if puck_start not in cell_index:
        raise ValidationError("puck_start outside the grid")

    def inside(r, c):
        return 0 <= r < height and 0 <= c < width

    n = len(states)
    P = np.zeros((n, len(MOVES), n))
    for i, ((ar, ac), (pr, pc)) in enumerate(states):
        for a, (dr, dc) in enumerate(MOVES):
            nxt = (ar + dr, ac + dc)
            result = ((ar, ac), (pr, pc))
            if (dr, dc) != (0, 0) and inside(*nxt) and nxt[1] in band_set:
                if nxt == (pr, pc):
                    slide = 0
                    while slide < friction and inside(pr + dr * (slide + 1), pc + dc * (slide + 1)):
                        slide += 1
                    if slide > 0:
                        result = (nxt, (pr + dr * slide, pc + dc * slide))
                else:
                    result = (nxt, (pr, pc))
            P[i, a, state_index[result]] = 1.0

    if agent_starts is None:
        agent_starts = [cell for cell in agent_cells if cell != puck_start]
    mu = np.zeros(n)
    for cell in agent_starts:
        key = (tuple(cell), puck_start)
        if key not in state_index:
            raise ValidationError(f"agent start {tuple(cell)} is not a valid band cell")
        mu[state_index[key]] += 1.0
    if mu.sum() == 0:
        raise ValidationError("no valid agent start cell")
    mu /= mu.sum()
    labels = [f"a{ag[0]},{ag[1]}|p{pk[0]},{pk[1]}" for ag, pk in states]
    env = TabularEnv(P, mu, labels, name="slippery")
    phi = np.array([cell_index[pk] for _, pk in states])
    gs = GoalSpace(phi, np.array(cells, dtype=float), epsilon)
    return env, gs


# -- continuous point mass ---------------------------------------------------


class PointMassEnv:
    """2-D point mass with velocity control inside a box.

    ``s' = clip(s + dt * v, low, high)`` where ``v`` is the action rescaled to
    norm at most ``v_max``.
    """

    is_continuous = True

    def __init__(self, low=(0.0, 0.0), high=(1.0, 1.0), dt=0.1, v_max=1.0, start=None):
        if not v_max > 0:
            raise ValidationError("v_max must be positive")
        if not dt > 0:
            raise ValidationError("dt must be positive")
        self.low = np.asarray(low, dtype=float)
        self.high = np.asarray(high, dtype=float)
        if self.low.shape != (2,) or self.high.shape != (2,) or np.any(self.high <= self.low):
            raise ValidationError("box bounds must be 2-D with low < high")
        self.dt = float(dt)
        self.v_max = float(v_max)
        self.start = self.low.copy() if start is None else np.asarray(start, dtype=float)
        self.name = "pointmass"

    @property
    def action_low(self):
        return np.full(2, -self.v_max)

    @property
    def action_high(self):
        return np.full(2, self.v_max)

    @property
    def step_length(self):
        return self.v_max * self.dt

    def _velocity(self, a):
        a = np.asarray(a, dtype=float)
        norm = np.linalg.norm(a, axis=-1, keepdims=True)
        scale = np.where(norm > self.v_max, self.v_max / np.maximum(norm, 1e-300), 1.0)
        return a * scale

    def reset(self, rng=None):
        return self.start.copy()

    def step(self, s, a, rng=None):
        return np.clip(np.asarray(s, dtype=float) + self.dt * self._velocity(a), self.low, self.high)

    def rollout(self, s0, actions, rng=None):
        out = []
        s = np.asarray(s0, dtype=float)
        for a in actions:
            s = self.step(s, a)
            out.append(s)
        return out

    def rollout_batch(self, s0, actions, uniforms=None):
        actions = np.asarray(actions, dtype=float)
        B, L, _ = actions.shape
        out = np.empty((B, L, 2))
        s = np.broadcast_to(np.asarray(s0, dtype=float), (B, 2))
        for t in range(L):
            s = np.clip(s + self.dt * self._velocity(actions[:, t]), self.low, self.high)
            out[:, t] = s
        return out


@dataclass(frozen=True)
class PointMassGoalSpace:
    """Identity abstraction on positions with the Euclidean metric."""

    epsilon: float = 0.05

    def abstract(self, states):
        return np.asarray(states, dtype=float)

    def state_coords(self, states):
        return np.atleast_2d(np.asarray(states, dtype=float))

    def goal_coords_of(self, goals):
        return np.atleast_2d(np.asarray(goals, dtype=float))

    def metric_matrix(self, goals_a, goals_b):
        xa = np.atleast_2d(np.asarray(goals_a, dtype=float))
        xb = np.atleast_2d(np.asarray(goals_b, dtype=float))
        return np.linalg.norm(xa[:, None, :] - xb[None, :, :], axis=-1)

    def metric(self, g1, g2):
        return float(np.linalg.norm(np.asarray(g1, dtype=float) - np.asarray(g2, dtype=float)))

    def state_goal_metric(self, states, goals):
        return self.metric_matrix(states, goals)


class AnalyticDistance:
    """Steps-to-go for the point mass: ``ceil(||s - g|| / (v_max * dt))``.

    Zero inside the achievement radius ``epsilon`` so that, as for the tabular
    tables, ``d(s, g) = 0`` exactly when ``s`` achieves ``g``. Also serves as
    the goal-to-goal table since the abstraction is the identity.
    """

    def __init__(self, step_length, t_max, epsilon=0.0):
        self.step_length = float(step_length)
        self.t_max = float(t_max)
        self.epsilon = float(epsilon)

    def pairwise(self, states, goals):
        xs = np.atleast_2d(np.asarray(states, dtype=float))
        xg = np.atleast_2d(np.asarray(goals, dtype=float))
        dist = np.linalg.norm(xs[:, None, :] - xg[None, :, :], axis=-1)
        # rounding guards against 1.0 / 0.25 landing a hair above 4
        steps = np.minimum(np.ceil(np.round(dist / self.step_length, 9)), self.t_max)
        return np.where(dist < self.epsilon, 0.0, steps)

    def __call__(self, s, g):
        return float(self.pairwise(s, g)[0, 0])


def build_pointmass(box=((0.0, 0.0), (1.0, 1.0)), dt=0.1, v_max=1.0, start=None, epsilon=0.05, t_max=50):
    """Return ``(env, goal_space, distance)`` for the continuous point mass."""
    env = PointMassEnv(box[0], box[1], dt=dt, v_max=v_max, start=start)
    return env, PointMassGoalSpace(epsilon), AnalyticDistance(env.step_length, t_max, epsilon)


ENV_BUILDERS = {
    "chain": build_chain,
    "maze": build_maze,
    "slippery": build_slippery,
    "pointmass": build_pointmass,
}


def build_env(name, params=None):
    """Construct a built-in environment from its name and keyword parameters."""
    if name not in ENV_BUILDERS:
        raise ValidationError(f"unknown environment {name!r}; choose from {sorted(ENV_BUILDERS)}")
    params = dict(params or {})
    if name == "pointmass" and "box" in params:
        params["box"] = tuple(tuple(x) for x in params["box"])
    return ENV_BUILDERS[name](**params)
