"""Hierarchical goal-following baselines.

Both baselines keep a pointer into the goal sequence that advances when a
thresholded distance classifier confirms the next goal. ``Pi+Cls`` then acts
greedily on the tabular first-hit distance, ``MPC+Cls`` optimizes a short
horizon surrogate of the steps needed to hit the next goal.
"""

from dataclasses import dataclass
import time

import numpy as np
from sklearn.base import BaseEstimator

from ._streams import as_seed, episode_streams, to_list
from ._validation import ValidationError
from .mdp import EnvTaskConfig
from .metrics import score
from .optim import IcemConfig, exhaustive_optimize, icem_optimize
from .values import greedy_goal_policy

__all__ = [
    "GoalClassifier",
    "cls",
    "classifier_pointer",
    "first_hit_surrogate",
    "pi_cls_episode",
    "mpc_cls_episode",
    "sweep_threshold",
    "PolicyClsPlanner",
    "MpcClsPlanner",
    "THRESHOLDS",
]

THRESHOLDS = (1, 2, 3, 4, 5)
POINTER_MODES = ("ordered", "set")


@dataclass(frozen=True, eq=False)
class GoalClassifier:
    """``C(s, g) = d(s, g) <= threshold``."""

    threshold: float
    distance: object

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValidationError("classifier threshold must be positive")

    def __call__(self, s, g):
        return bool(self.distance(s, g) <= self.threshold)


def cls(c, s, g):
    return c(s, g)


def classifier_pointer(c, history, goals, mode="ordered"):
    """Index of the last classifier-confirmed goal and the step it was confirmed.

    ``"ordered"``: walk the history; each state may confirm at most the goal
    right after the pointer. ``"set"``: the largest goal index confirmed by any
    visited state, regardless of order. Returns ``(-1, 0)`` when nothing is
    confirmed.
    """
    if mode not in POINTER_MODES:
        raise ValidationError(f"pointer mode must be one of {POINTER_MODES}")
    i, when = -1, 0
    M = len(goals) - 1
    if mode == "ordered":
        for t, s in enumerate(history):
            if i < M and c(s, goals[i + 1]):
                i, when = i + 1, t
        return i, when
    for t, s in enumerate(history):
        for j in range(M, i, -1):
            if c(s, goals[j]):
                i, when = j, t
                break
    return i, when


class _Pointer:
    """Incremental version of :func:`classifier_pointer`."""

    def __init__(self, c, goals, mode="ordered"):
        if mode not in POINTER_MODES:
            raise ValidationError(f"pointer mode must be one of {POINTER_MODES}")
        self.c, self.goals, self.mode = c, list(goals), mode
        self.i = -1
        self.M = len(self.goals) - 1

    def observe(self, s):
        if self.mode == "ordered":
            if self.i < self.M and self.c(s, self.goals[self.i + 1]):
                self.i += 1
        else:
            for j in range(self.M, self.i, -1):
                if self.c(s, self.goals[j]):
                    self.i = j
                    break
        return self.i

    @property
    def target(self):
        return self.goals[min(self.i + 1, self.M)]

    @property
    def finished(self):
        return self.i >= self.M


def _achieved(gs, s, g):
    return bool(gs.state_goal_metric([s], [g])[0, 0] < gs.epsilon)


def _is_continuous(env):
    return bool(getattr(env, "is_continuous", False))


def _run_hierarchical(env, d, gs, task, c, rng, choose, name, pointer_mode):
    t0 = time.perf_counter()
    seed = as_seed(rng)
    reset_rng, env_rng, plan_rng = episode_streams(seed)
    goals = list(task.goals)
    M = len(goals) - 1
    s = env.reset(reset_rng)
    pointer = _Pointer(c, goals, pointer_mode)
    pointer.observe(s)
    history = [s]
    diagnostics = []
    for k in range(task.t_max):
        if pointer.finished and _achieved(gs, s, goals[M]):
            break
        target = pointer.target
        action, info = choose(s, target, k, plan_rng)
        s = env.step(s, action, env_rng)
        history.append(s)
        pointer.observe(s)
        diagnostics.append({"k": k, "target": to_list(target), "pointer": pointer.i, "action": to_list(action), **info})
    res = score(history, goals, gs, diagnostics=diagnostics, seed=to_list(seed), planner=name)
    res.wall_time = time.perf_counter() - t0
    return res


def pi_cls_episode(env, d, gs, task, c, rng=None, pointer_mode="ordered"):
    """Greedy tabular policy toward the goal after the classifier pointer."""
    if _is_continuous(env):
        raise ValidationError("Pi+Cls needs a tabular environment")
    policy = greedy_goal_policy(env, d)

    def choose(s, g, k, plan_rng):
        return int(policy[s, g]), {}

    return _run_hierarchical(env, d, gs, task, c, rng, choose, "pi+cls", pointer_mode)


def first_hit_surrogate(d, states, goal):
    """``min_t (t + d(s_t, g))`` over planned states of shape (batch, L[, dim])."""
    states = np.asarray(states)
    B, L = states.shape[:2]
    flat = states.reshape((B * L,) + states.shape[2:])
    dist = np.asarray(d.pairwise(flat, [goal]), dtype=float).reshape(B, L)
    return (dist + np.arange(1, L + 1)[None, :]).min(axis=1)


def mpc_cls_episode(env, model, d, gs, task, c, optimizer="exhaustive", rng=None, pointer_mode="ordered"):
    """Short-horizon optimization of the first-hit surrogate toward the next goal.

    ``task.horizon`` is the planning horizon. Stochastic models are rolled out
    with one shared noise draw per planning step.
    """
    continuous = _is_continuous(model)
    H = task.horizon
    if continuous and optimizer == "exhaustive":
        optimizer = IcemConfig(horizon=H)
    state = {"prev": None}

    def choose(s, g, k, plan_rng):
        rng_k = plan_rng(k)
        uniforms = rng_k.random(H)

        def objective(actions):
            return first_hit_surrogate(d, model.rollout_batch(s, actions, uniforms), g)

        if continuous:
            plan = icem_optimize(objective, model.action_low, model.action_high, optimizer, rng_k, state["prev"], H)
            state["prev"] = plan.actions
            action = plan.actions[0]
        else:
            plan = exhaustive_optimize(objective, model.n_actions, H, rng=rng_k)
            action = int(plan.actions[0])
        return action, {"surrogate": plan.cost, "method": plan.info["method"]}

    return _run_hierarchical(env, d, gs, task, c, rng, choose, "mpc+cls", pointer_mode)


def sweep_threshold(run, thresholds=THRESHOLDS):
    """Pick the classifier threshold with the lowest mean W_min.

    ``run(theta)`` returns a list of TaskResults. Ties go to the smaller
    threshold. Returns ``(best_theta, results_by_theta)``.
    """
    results = {theta: run(theta) for theta in thresholds}
    means = {theta: float(np.mean([r.w_min for r in res])) for theta, res in results.items()}
    best = min(thresholds, key=lambda t: (means[t], t))
    return best, results


class _ClsEstimator(BaseEstimator):
    def fit(self, env, gs, t_max=None, tables=None, model=None):
        """Attach an environment and its distance table (computed if not given)."""
        if not self.threshold > 0:
            raise ValidationError("threshold must be positive")
        if tables is None:
            if _is_continuous(env):
                raise ValidationError("continuous environments need an explicit distance")
            if t_max is None:
                raise ValidationError("t_max is required to compute distance tables")
            from .values import compute_first_hit_distance

            d = compute_first_hit_distance(env, gs, t_max)
        else:
            d = tables[0] if isinstance(tables, tuple) else tables
        self.env_, self.gs_, self.d_ = env, gs, d
        self.model_ = env if model is None else model
        self.t_max_ = int(t_max if t_max is not None else d.t_max)
        return self

    def predict(self, goals, seeds=(0,), t_max=None):
        return [self.run(goals, seed, t_max) for seed in seeds]


class PolicyClsPlanner(_ClsEstimator):
    """Estimator wrapper around :func:`pi_cls_episode`."""

    def __init__(self, threshold=1.0, pointer_mode="ordered", name="pi+cls"):
        self.threshold = threshold
        self.pointer_mode = pointer_mode
        self.name = name

    def run(self, goals, seed=0, t_max=None):
        task = EnvTaskConfig(1, int(t_max or self.t_max_), tuple(goals))
        c = GoalClassifier(self.threshold, self.d_)
        res = pi_cls_episode(self.env_, self.d_, self.gs_, task, c, seed, self.pointer_mode)
        res.planner = self.name
        return res


class MpcClsPlanner(_ClsEstimator):
    """Estimator wrapper around :func:`mpc_cls_episode`."""

    def __init__(self, threshold=1.0, horizon=16, optimizer="exhaustive", pointer_mode="ordered", name="mpc+cls"):
        self.threshold = threshold
        self.horizon = horizon
        self.optimizer = optimizer
        self.pointer_mode = pointer_mode
        self.name = name

    def run(self, goals, seed=0, t_max=None):
        task = EnvTaskConfig(self.horizon, int(t_max or self.t_max_), tuple(goals))
        c = GoalClassifier(self.threshold, self.d_)
        res = mpc_cls_episode(self.env_, self.model_, self.d_, self.gs_, task, c, self.optimizer, seed, self.pointer_mode)
        res.planner = self.name
        return res
