import os
from collections import deque

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from zilot.envs import build_chain, build_maze
from zilot.mdp import GoalSpace, TabularEnv

settings.register_profile(
    "default", deadline=None, max_examples=50, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", deadline=None, max_examples=200, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

# chain state indices: (0,0) (1,0) (1,1) (2,1)
S00, S10, S11, S21 = 0, 1, 2, 3
A0, A1 = 0, 1


def bfs_hit_distance(env, gs, t_max):
    """Shortest path length to each goal's achievement set on a deterministic env."""
    nxt = env._next
    S = env.n_states
    preds = [[] for _ in range(S)]
    for s in range(S):
        for s2 in set(nxt[s].tolist()):
            preds[s2].append(s)
    ach = gs.achievement_mask()
    out = np.full((S, gs.n_goals), float(t_max))
    for g in range(gs.n_goals):
        dist = np.full(S, -1)
        q = deque(np.flatnonzero(ach[:, g]).tolist())
        dist[q] = 0
        while q:
            s = q.popleft()
            for p in preds[s]:
                if dist[p] < 0:
                    dist[p] = dist[s] + 1
                    q.append(p)
        ok = dist >= 0
        out[ok, g] = np.minimum(dist[ok], t_max)
    return out


def random_deterministic_env(rng, n_states, n_actions, n_goals=None):
    """Random deterministic env with a random abstraction onto 1-D goal coordinates."""
    P = np.zeros((n_states, n_actions, n_states))
    targets = rng.integers(0, n_states, size=(n_states, n_actions))
    P[np.arange(n_states)[:, None], np.arange(n_actions)[None, :], targets] = 1.0
    mu = np.full(n_states, 1.0 / n_states)
    if n_goals is None:
        phi = np.arange(n_states)
        n_goals = n_states
    else:
        phi = rng.integers(0, n_goals, size=n_states)
    return TabularEnv(P, mu), GoalSpace(phi, np.arange(n_goals, dtype=float), 0.5)


@pytest.fixture
def chain_half():
    return build_chain(0.5)


@pytest.fixture
def corridor():
    return build_maze(["#######", "#.....#", "#######"], start=(1, 1))


@pytest.fixture
def open3():
    return build_maze(["...", "...", "..."], start=(0, 0))
