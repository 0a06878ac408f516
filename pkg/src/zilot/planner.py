"""Zero-shot trajectory matching planner.

At every step the planner rolls candidate action sequences through a model,
matches the visited and planned states against the goals expected to be
reachable within the horizon by entropic optimal transport, and executes the
first action of the cheapest sequence (receding-horizon control).

The same code serves tabular environments (integer states, goal indices,
exhaustive search) and the continuous point mass (coordinate states, iCEM).
"""

from dataclasses import dataclass, field, replace
import math
import time

import numpy as np
from sklearn.base import BaseEstimator

from ._streams import as_seed, episode_streams, to_list
from ._validation import ValidationError
from .baselines import GoalClassifier, classifier_pointer
from .metrics import score
from .mdp import EnvTaskConfig
from .optim import IcemConfig, exhaustive_optimize, icem_optimize
from .ot import OtProblem, SinkhornConfig, sinkhorn_batch, transport_simplex

__all__ = [
    "GoalSchedule",
    "ZilotConfig",
    "PlannerState",
    "ZilotObjective",
    "estimate_goal_times",
    "select_reachable_goals",
    "effective_horizon",
    "clamp_costs",
    "zilot_objective",
    "zilot_episode",
    "episode_streams",
    "ZilotPlanner",
]

COST_SOURCES = ("distance", "metric")
OT_METHODS = ("sinkhorn", "exact")


@dataclass(frozen=True)
class GoalSchedule:
    """Estimated step ``t_i`` at which goal ``i`` should be reached."""

    times: tuple

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        if not times:
            raise ValidationError("schedule must hold at least one time")
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValidationError("schedule times must be nondecreasing")
        object.__setattr__(self, "times", times)

    def __len__(self):
        return len(self.times)

    @property
    def last(self):
        return len(self.times) - 1


def estimate_goal_times(d, w, s0, goals):
    """``t_0 = d(s0, g_0)`` and ``t_i = t_{i-1} + W(g_{i-1}, g_i)``."""
    goals = list(goals)
    if not goals:
        raise ValidationError("need at least one goal")
    times = [d(s0, goals[0])]
    for prev, nxt in zip(goals, goals[1:]):
        times.append(times[-1] + w(prev, nxt))
    return GoalSchedule(times)


def select_reachable_goals(schedule, k, h_steps):
    """Smallest ``j`` with ``t_j >= k + H``, or the last index if none is."""
    horizon_end = k + h_steps
    for j, t in enumerate(schedule.times):
        if t >= horizon_end:
            return j
    return schedule.last


def effective_horizon(schedule, k, h_steps, K=None):
    """``max(1, min(ceil(t_K - k), H))`` with ``K`` from :func:`select_reachable_goals`."""
    if K is None:
        K = select_reachable_goals(schedule, k, h_steps)
    # round first so 3.0000000001 from summed floats does not become 4
    remaining = math.ceil(round(schedule.times[K] - k, 9))
    return int(max(1, min(remaining, h_steps)))


def clamp_costs(C, t_max):
    """Rescale by ``t_max`` and clip into [0, 1]."""
    return np.clip(np.asarray(C, dtype=float) / float(t_max), 0.0, 1.0)


@dataclass(frozen=True)
class ZilotConfig:
    """Planner settings.

    Parameters
    ----------
    horizon : int
        Planning horizon ``H`` before truncation.
    sinkhorn : SinkhornConfig
        ``xi_b`` is only used when ``unbalanced`` is set (default 1.0 then).
    ot_method : {"sinkhorn", "exact"}
        ``"exact"`` solves every matching with the transportation simplex
        (balanced only).
    cost_source : {"distance", "metric"}
        First-hit distance ``d`` or the goal metric ``h`` as transport cost.
    unbalanced : bool
        Relax the goal marginal with a KL penalty.
    cls_filter : bool
        Drop classifier-confirmed goals and the history before them.
    cls_threshold : float
    optimizer : "exhaustive" or IcemConfig
    early_stop : bool
        End the episode once the last goal is in scope and achieved.
    n_rollouts : int
        Noise draws per planning step for stochastic models; the objective is
        the mean transport cost over them. Every candidate sees the same draws.
    """

    horizon: int = 16
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)
    ot_method: str = "sinkhorn"
    cost_source: str = "distance"
    unbalanced: bool = False
    cls_filter: bool = False
    cls_threshold: float = 1.0
    optimizer: object = "exhaustive"
    early_stop: bool = True
    n_rollouts: int = 16

    def __post_init__(self):
        if self.horizon < 1:
            raise ValidationError("horizon must be >= 1")
        if self.n_rollouts < 1:
            raise ValidationError("n_rollouts must be >= 1")
        if self.cost_source not in COST_SOURCES:
            raise ValidationError(f"cost_source must be one of {COST_SOURCES}")
        if self.ot_method not in OT_METHODS:
            raise ValidationError(f"ot_method must be one of {OT_METHODS}")
        if self.ot_method == "exact" and self.unbalanced:
            raise ValidationError("exact OT is balanced only")
        if not (self.optimizer == "exhaustive" or isinstance(self.optimizer, IcemConfig)):
            raise ValidationError("optimizer must be 'exhaustive' or an IcemConfig")
        if self.cls_filter and not self.cls_threshold > 0:
            raise ValidationError("cls_threshold must be positive")

    @property
    def ot_config(self):
        s = self.sinkhorn
        if self.unbalanced:
            return s if s.xi_b is not None else replace(s, xi_b=1.0)
        return s if s.xi_b is None else replace(s, xi_b=None)


@dataclass
class PlannerState:
    history: list
    step: int
    schedule: GoalSchedule
    config: ZilotConfig

    def __post_init__(self):
        if len(self.history) != self.step + 1:
            raise ValidationError("history length must equal step + 1")


def _is_continuous(env):
    return bool(getattr(env, "is_continuous", False))


def _achieved(gs, s, g):
    return bool(gs.state_goal_metric([s], [g])[0, 0] < gs.epsilon)


class ZilotObjective:
    """Batched transport cost of candidate action sequences.

    Built once per planning step; calling it with an array of action
    sequences returns one cost per sequence. ``uniforms`` has one row of
    inverse-CDF draws per model rollout; all candidates are rolled out with
    the same rows (common random numbers) and their costs averaged over rows.
    Identical rollouts are solved once.
    """

    def __init__(self, ps, model, d, goals, gs, K, uniforms=None, classifier=None):
        cfg = ps.config
        self.model = model
        self.d = d
        self.gs = gs
        self.cfg = cfg
        self.sinkhorn = cfg.ot_config
        self.continuous = _is_continuous(model)
        deterministic = self.continuous or model.is_deterministic
        if uniforms is None or deterministic:
            uniforms = np.zeros((1, 1))
        self.uniforms = np.atleast_2d(np.asarray(uniforms, dtype=float))
        self.t_max = float(d.t_max)
        self.K = int(K)
        history = list(ps.history)
        first_goal = 0
        start = 0
        self.pointer = -1
        if cfg.cls_filter:
            if classifier is None:
                classifier = GoalClassifier(cfg.cls_threshold, d)
            i, when = classifier_pointer(classifier, history, goals)
            self.pointer = i
            if i >= 0:
                first_goal = i + 1
                start = when
        M = len(goals) - 1
        self.done = first_goal > M
        self.goal_ids = list(range(first_goal, max(self.K, first_goal) + 1)) if not self.done else []
        self.goals = [goals[j] for j in self.goal_ids]
        self.current = history[-1]
        self.history = history[start:]
        self.n_evaluated = 0
        self.n_solved = 0
        if not self.done:
            self._hist_cost = self._costs(self._stack(self.history))

    def _stack(self, states):
        if self.continuous:
            return np.asarray(states, dtype=float).reshape(-1, 2)
        return np.asarray(states, dtype=np.int64).reshape(-1)

    def _costs(self, states):
        if self.cfg.cost_source == "distance":
            C = self.d.pairwise(states, self.goals)
        else:
            C = self.gs.state_goal_metric(states, self.goals)
        return clamp_costs(C, self.t_max)

    def rollout(self, actions, row=0):
        return self.model.rollout_batch(self.current, actions, self.uniforms[row])

    def transport_costs(self, planned):
        """Cost of each planned state sequence, shape (batch, L[, dim])."""
        B, L = planned.shape[:2]
        flat = planned.reshape((B * L,) + planned.shape[2:])
        C_plan = self._costs(flat).reshape(B, L, -1)
        C_hist = np.broadcast_to(self._hist_cost, (B,) + self._hist_cost.shape)
        C = np.concatenate([C_hist, C_plan], axis=1)
        n, m = C.shape[1:]
        a = np.full(n, 1.0 / n)
        b = np.full(m, 1.0 / m)
        self.n_solved += B
        if self.cfg.ot_method == "exact":
            return np.array([transport_simplex(OtProblem(c, a, b)).cost for c in C])
        T, _ = sinkhorn_batch(C, a, b, self.sinkhorn)
        return (T * C).sum(axis=(1, 2))

    def __call__(self, actions):
        actions = np.asarray(actions)
        self.n_evaluated += len(actions)
        if self.done:
            return np.zeros(len(actions))
        if self.continuous:
            return self.transport_costs(self.rollout(actions))
        B = len(actions)
        planned = np.concatenate([self.rollout(actions, r) for r in range(len(self.uniforms))])
        uniq, inverse = np.unique(planned, axis=0, return_inverse=True)
        costs = self.transport_costs(uniq)[np.asarray(inverse).reshape(-1)]
        return costs.reshape(-1, B).mean(axis=0)


def zilot_objective(ps, actions, model, d, goals, gs, uniforms=None, K=None):
    """Transport cost of a single action sequence (see :class:`ZilotObjective`)."""
    if K is None:
        K = select_reachable_goals(ps.schedule, ps.step, ps.config.horizon)
    obj = ZilotObjective(ps, model, d, goals, gs, K, uniforms)
    return float(obj(np.asarray(actions)[None])[0])


def zilot_episode(env, model, d, w, gs, task, cfg, rng=None, plan_cache=None):
    """Run one receding-horizon episode and score it.

    Parameters
    ----------
    env : environment executing the actions
    model : environment used for planning rollouts (often ``env`` itself)
    d, w : state-to-goal and goal-to-goal time tables
    gs : goal space
    task : EnvTaskConfig
        ``horizon`` overrides ``cfg.horizon``; ``t_max`` bounds the episode.
    cfg : ZilotConfig
    rng : int, SeedSequence or Generator
    plan_cache : dict, optional
        Reused across episodes that share the model, tables, goals and
        ``cfg``. Only consulted for deterministic tabular models, where the
        exhaustive plan is a function of the history alone.

    Returns
    -------
    TaskResult
    """
    t0 = time.perf_counter()
    seed = as_seed(rng)
    reset_rng, env_rng, plan_rng = episode_streams(seed)
    cfg = replace(cfg, horizon=task.horizon)
    goals = list(task.goals)
    M = len(goals) - 1
    continuous = _is_continuous(env)
    if continuous and cfg.optimizer == "exhaustive":
        cfg = replace(cfg, optimizer=IcemConfig(horizon=cfg.horizon))
    classifier = GoalClassifier(cfg.cls_threshold, d) if cfg.cls_filter else None
    if continuous or not model.is_deterministic:
        plan_cache = None

    s = env.reset(reset_rng)
    schedule = estimate_goal_times(d, w, s, goals)
    history = [s]
    diagnostics = []
    prev_plan = None
    stopped = False
    for k in range(task.t_max):
        K = select_reachable_goals(schedule, k, cfg.horizon)
        if cfg.early_stop and K == M and _achieved(gs, history[-1], goals[M]):
            stopped = True
            break
        h_act = effective_horizon(schedule, k, cfg.horizon, K)
        key = tuple(history)
        if plan_cache is not None and key in plan_cache:
            cached = plan_cache[key]
            if cached is None:
                stopped = True
                break
            action, record = cached
            s = env.step(s, action, env_rng)
            history.append(s)
            diagnostics.append(dict(record))
            continue
        ps = PlannerState(history, k, schedule, cfg)
        rng_k = plan_rng(k)
        uniforms = rng_k.random((cfg.n_rollouts, h_act))
        obj = ZilotObjective(ps, model, d, goals, gs, K, uniforms, classifier)
        if obj.done and cfg.early_stop:
            if plan_cache is not None:
                plan_cache[key] = None
            stopped = True
            break
        if continuous:
            plan = icem_optimize(
                obj, model.action_low, model.action_high, cfg.optimizer, rng_k, shift_init=prev_plan, horizon=h_act
            )
            prev_plan = plan.actions
            action = plan.actions[0]
        else:
            plan = exhaustive_optimize(obj, model.n_actions, h_act, rng=rng_k)
            action = int(plan.actions[0])
        s = env.step(s, action, env_rng)
        history.append(s)
        record = {
            "k": k,
            "K": K,
            "goals_in_scope": obj.goal_ids,
            "h_actual": h_act,
            "ot_cost": plan.cost,
            "plan": to_list(plan.actions),
            "method": plan.info["method"],
            "n_candidates": plan.info["n_candidates"],
            "n_ot_solves": obj.n_solved,
        }
        diagnostics.append(record)
        if plan_cache is not None and plan.info["method"] == "exhaustive":
            plan_cache[key] = (action, record)
    if not stopped and cfg.early_stop:
        stopped = select_reachable_goals(schedule, len(history) - 1, cfg.horizon) == M and _achieved(
            gs, history[-1], goals[M]
        )
    if diagnostics or stopped:
        diagnostics.append({"schedule": list(schedule.times), "early_stop": bool(stopped)})
    result = score(history, goals, gs, diagnostics=diagnostics, seed=to_list(seed), planner="zilot")
    result.wall_time = time.perf_counter() - t0
    return result


class ZilotPlanner(BaseEstimator):
    """Estimator wrapper around :func:`zilot_episode`.

    ``fit`` computes (or receives) the distance tables for an environment;
    ``predict`` runs one episode per seed on a goal sequence.

    Examples
    --------
    >>> from zilot.envs import build_chain
    >>> env, gs = build_chain(0.5)
    >>> planner = ZilotPlanner(horizon=3).fit(env, gs, t_max=20)
    >>> planner.predict([0, 1, 2], seeds=[0])[0].goal_fraction
    1.0
    """

    def __init__(
        self,
        horizon=16,
        eta=0.02,
        iterations=500,
        xi_b=1.0,
        ot_method="sinkhorn",
        cost_source="distance",
        unbalanced=False,
        cls_filter=False,
        cls_threshold=1.0,
        optimizer="exhaustive",
        early_stop=True,
        n_rollouts=16,
        name="zilot",
    ):
        self.horizon = horizon
        self.eta = eta
        self.iterations = iterations
        self.xi_b = xi_b
        self.ot_method = ot_method
        self.cost_source = cost_source
        self.unbalanced = unbalanced
        self.cls_filter = cls_filter
        self.cls_threshold = cls_threshold
        self.optimizer = optimizer
        self.early_stop = early_stop
        self.n_rollouts = n_rollouts
        self.name = name

    def config(self):
        return ZilotConfig(
            horizon=self.horizon,
            sinkhorn=SinkhornConfig(self.eta, self.iterations, self.xi_b if self.unbalanced else None),
            ot_method=self.ot_method,
            cost_source=self.cost_source,
            unbalanced=self.unbalanced,
            cls_filter=self.cls_filter,
            cls_threshold=self.cls_threshold,
            optimizer=self.optimizer,
            early_stop=self.early_stop,
            n_rollouts=self.n_rollouts,
        )

    def fit(self, env, gs, t_max=None, tables=None, model=None):
        """Attach an environment and its ``(d, w)`` tables.

        Tables are computed by value iteration unless given; for continuous
        environments pass ``tables=(distance, distance)``.
        """
        self.config()  # validate hyperparameters early
        if tables is None:
            if _is_continuous(env):
                raise ValidationError("continuous environments need explicit distance tables")
            if t_max is None:
                raise ValidationError("t_max is required to compute distance tables")
            from .values import compute_first_hit_distance, compute_goal_pair_times

            d = compute_first_hit_distance(env, gs, t_max)
            tables = (d, compute_goal_pair_times(d, gs))
        self.env_, self.gs_ = env, gs
        self.model_ = env if model is None else model
        self.d_, self.w_ = tables
        self.t_max_ = int(t_max if t_max is not None else self.d_.t_max)
        return self

    def run(self, goals, seed=0, t_max=None):
        task = EnvTaskConfig(self.horizon, int(t_max or self.t_max_), tuple(goals))
        res = zilot_episode(self.env_, self.model_, self.d_, self.w_, self.gs_, task, self.config(), seed)
        res.planner = self.name
        return res

    def predict(self, goals, seeds=(0,), t_max=None):
        return [self.run(goals, seed, t_max) for seed in seeds]
