from collections import deque

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from zilot._validation import ValidationError
from zilot.envs import build_chain, build_env, build_maze, build_pointmass, build_slippery
from zilot.values import compute_first_hit_distance

from conftest import A0, A1, S00, S10, S11, S21

UP, DOWN, LEFT, RIGHT, STAY = range(5)


@pytest.mark.parametrize("p", [0.0, 0.3, 0.5, 0.7])
def test_chain_fixture(p):
    env, gs = build_chain(p)
    P = np.zeros((4, 2, 4))
    P[S00, A0, S10] = 1
    P[S00, A1, S00] = p
    P[S00, A1, S11] = 1 - p
    P[S10, :, S10] = 1
    P[S11, :, S21] = 1
    P[S21, :, S21] = 1
    np.testing.assert_array_equal(env.transitions, P)
    assert gs.abstraction.tolist() == [0, 1, 1, 2]
    assert gs.epsilon == 0.5
    assert env.initial_dist.tolist() == [1, 0, 0, 0]


def test_chain_distances():
    env, gs = build_chain(0.0)
    assert compute_first_hit_distance(env, gs, 20)(S00, 2) == 2
    env, gs = build_chain(0.5)
    assert compute_first_hit_distance(env, gs, 20)(S00, 2) == pytest.approx(3.0, abs=1e-8)


def test_chain_rejects_p():
    with pytest.raises(ValidationError):
        build_chain(1.0)


def test_maze_open_grid(open3):
    env, gs = open3
    d = compute_first_hit_distance(env, gs, 20)
    corner, opposite = gs.goal_index([0, 0]), gs.goal_index([2, 2])
    assert d(corner, opposite) == 4


def test_maze_wall_blocks():
    env, gs = build_maze(["..", "#."], start=(0, 0))
    s = gs.goal_index([0, 0])
    assert env.step(s, DOWN) == s
    assert env.step(s, UP) == s
    assert env.step(s, STAY) == s
    assert env.step(s, RIGHT) == gs.goal_index([0, 1])


def test_maze_validation():
    with pytest.raises(ValidationError):
        build_maze(["#.", ".."], start=(0, 0))
    with pytest.raises(ValidationError):
        build_maze([".#.", ".#.", ".#."])
    with pytest.raises(ValidationError):
        build_maze(["##"])


def test_slippery_gentle_push():
    env, gs = build_slippery(4, 1, [0, 1], friction=1, puck_start=(0, 1), agent_starts=[(0, 0)])
    s0 = env.reset(0)
    s1 = env.step(s0, RIGHT)
    assert env.label(s1) == "a0,1|p0,2"


def test_slippery_hard_push_is_irreversible():
    env, gs = build_slippery(6, 3, [0, 1, 2], friction=3, puck_start=(1, 2), agent_starts=[(1, 1)])
    d = compute_first_hit_distance(env, gs, 30)
    s1 = env.step(env.reset(0), RIGHT)
    assert env.label(s1) == "a1,2|p1,5"
    in_band = [gs.goal_index([r, c]) for r in range(3) for c in range(3)]
    assert np.all(d.values[s1, in_band] == 30)


def test_slippery_validation():
    with pytest.raises(ValidationError):
        build_slippery(3, 3, [0, 1, 2])
    with pytest.raises(ValidationError):
        build_slippery(3, 3, [0], friction=0)
    with pytest.raises(ValidationError):
        build_slippery(3, 3, [0], puck_start=(0, 0), agent_starts=[(0, 2)])
    with pytest.raises(ValidationError):
        build_slippery(3, 1, [0], puck_start=(0, 0))


def _reachable_states(env, s0):
    seen = {s0}
    q = deque([s0])
    while q:
        s = q.popleft()
        for s2 in env._next[s]:
            if s2 not in seen:
                seen.add(int(s2))
                q.append(int(s2))
    return seen


@given(st.integers(3, 5), st.integers(1, 3), st.integers(1, 3), st.data())
def test_slippery_finite_distance_is_band_reachability(width, height, friction, data):
    band = list(range(data.draw(st.integers(1, width - 1))))
    puck = (data.draw(st.integers(0, height - 1)), data.draw(st.integers(0, width - 1)))
    assume(len(band) * height > 1 or puck[1] not in band)
    env, gs = build_slippery(width, height, band, friction=friction, puck_start=puck)
    t_max = 200
    d = compute_first_hit_distance(env, gs, t_max)
    in_band = [gs.goal_index([r, c]) for r in range(height) for c in band]
    for s in range(env.n_states):
        reach = _reachable_states(env, s)
        puck_cells = {int(gs.abstraction[x]) for x in reach}
        for g in in_band:
            assert (d(s, g) < t_max) == (g in puck_cells)


def test_pointmass_distance_and_zero_action():
    env, gs, dist = build_pointmass(dt=0.25, v_max=1.0, t_max=50)
    assert dist([0.0, 0.0], [1.0, 0.0]) == 4
    s = np.array([0.3, 0.4])
    np.testing.assert_array_equal(env.step(s, [0.0, 0.0]), s)
    # speed is capped at v_max
    np.testing.assert_allclose(env.step(s, [10.0, 0.0]), [0.55, 0.4])
    # inside the achievement radius the distance is 0
    assert dist(s, s + 0.01) == 0.0


def test_pointmass_triangle_inequality():
    env, gs, dist = build_pointmass(dt=0.1, v_max=1.0, t_max=1000, epsilon=1e-9)
    x = np.random.default_rng(0).random((12, 2))
    D = dist.pairwise(x, x)
    assert np.all(D[:, None, :] <= D[:, :, None] + D[None, :, :])


def test_build_env_by_name():
    env, gs = build_env("chain", {"p": 0.3})
    assert env.n_states == 4
    with pytest.raises(ValidationError):
        build_env("fetch")
