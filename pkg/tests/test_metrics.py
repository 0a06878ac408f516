import numpy as np
import pytest
from hypothesis import given, strategies as st

from zilot.envs import build_chain
from zilot.metrics import goal_fraction, score, w1_prefix_curve, w_min
from zilot.mdp import GoalSpace

from conftest import S00, S10, S11, S21

LINE = GoalSpace(np.arange(6), np.arange(6.0), 0.5)  # state i sits at coordinate i


def test_exact_replay_is_zero():
    goals = [1, 4, 2]
    assert w_min(goals, goals, LINE) == 0.0
    assert goal_fraction(goals, goals, LINE) == 1.0


def test_single_goal_prefixes():
    # distances 3, 2, 1 to the goal: prefix means 3, 2.5, 2
    assert w_min([3, 2, 1], [0], LINE) == pytest.approx(2.0, abs=1e-12)
    np.testing.assert_allclose(w1_prefix_curve([3, 2, 1], [0], LINE), [3.0, 2.5, 2.0])


def test_chain_baseline_fixture():
    env, gs = build_chain(0.5)
    traj = [S00, S10, S10, S10]
    assert w_min(traj, [0, 1, 2], gs) > 0
    assert w_min(traj, [0, 1, 2], gs) == pytest.approx(1 / 3)
    assert goal_fraction(traj, [0, 1, 2], gs) == pytest.approx(2 / 3)
    assert goal_fraction([S00, S11, S21], [0, 1, 2], gs) == 1.0


def test_goal_fraction_examples():
    assert goal_fraction([5, 5, 5], [0, 1], LINE) == 0.0
    assert goal_fraction([0, 1], [0, 1], LINE) == 1.0
    # one state may satisfy several consecutive goals
    assert goal_fraction([2], [2, 2, 3], LINE) == pytest.approx(2 / 3)
    # out-of-order hits do not count
    assert goal_fraction([1, 0], [0, 1], LINE) == 0.5


def test_empty_inputs_rejected():
    with pytest.raises(ValueError):
        w_min([], [0], LINE)
    with pytest.raises(ValueError):
        goal_fraction([0], [], LINE)


traj_st = st.lists(st.integers(0, 5), min_size=1, max_size=12)
goals_st = st.lists(st.integers(0, 5), min_size=1, max_size=5)


@given(traj_st, goals_st)
def test_goal_fraction_monotone_in_prefix(traj, goals):
    vals = [goal_fraction(traj[: k + 1], goals, LINE) for k in range(len(traj))]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert 0.0 <= vals[-1] <= 1.0


@given(traj_st, goals_st)
def test_w_min_bounded_by_every_prefix(traj, goals):
    curve = w1_prefix_curve(traj, goals, LINE)
    wm = w_min(traj, goals, LINE)
    assert wm >= 0
    assert np.all(wm <= curve + 1e-12)


@given(goals_st)
def test_replay_any_goal_list(goals):
    assert w_min(goals, goals, LINE) == pytest.approx(0.0, abs=1e-12)
    assert goal_fraction(goals, goals, LINE) == 1.0


def test_score_and_serialization():
    res = score([3, 2, 1], [0], LINE, seed=4, planner="x")
    assert res.n_steps == 2
    d = res.to_dict()
    assert d["w_min"] == pytest.approx(2.0) and d["seed"] == 4 and "wall_time" not in d
    assert "wall_time" in res.to_dict(include_wall_time=True)
