"""Zero-shot imitation by trajectory matching with optimal transport.

Tabular environments with exact goal-conditioned distances, OT solvers, the
receding-horizon planner, hierarchical baselines and an experiment harness.
"""

from ._validation import NumericalError, ValidationError
from .baselines import GoalClassifier, MpcClsPlanner, PolicyClsPlanner, mpc_cls_episode, pi_cls_episode
from .envs import build_chain, build_env, build_maze, build_pointmass, build_slippery
from .mdp import EnvTaskConfig, GoalSpace, TabularEnv, goal_achieved
from .metrics import TaskResult, goal_fraction, w_min
from .optim import IcemConfig, exhaustive_optimize, icem_optimize
from .ot import OtProblem, SinkhornConfig, sinkhorn, sinkhorn_unbalanced, transport_simplex
from .planner import ZilotConfig, ZilotPlanner, zilot_episode
from .values import compute_first_hit_distance, compute_goal_pair_times, greedy_goal_policy

__version__ = "0.1.0"

__all__ = [
    "NumericalError",
    "ValidationError",
    "GoalClassifier",
    "MpcClsPlanner",
    "PolicyClsPlanner",
    "mpc_cls_episode",
    "pi_cls_episode",
    "build_chain",
    "build_env",
    "build_maze",
    "build_pointmass",
    "build_slippery",
    "EnvTaskConfig",
    "GoalSpace",
    "TabularEnv",
    "goal_achieved",
    "TaskResult",
    "goal_fraction",
    "w_min",
    "IcemConfig",
    "exhaustive_optimize",
    "icem_optimize",
    "OtProblem",
    "SinkhornConfig",
    "sinkhorn",
    "sinkhorn_unbalanced",
    "transport_simplex",
    "ZilotConfig",
    "ZilotPlanner",
    "zilot_episode",
    "compute_first_hit_distance",
    "compute_goal_pair_times",
    "greedy_goal_policy",
]
