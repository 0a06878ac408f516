"""Experiment matrix runner: tasks x planners x seeds, with JSON/CSV output.

A run configuration is a JSON object::

    {
      "tasks": ["tasks/chain.json", {"name": "maze-L", "env": "maze", ...}],
      "planners": [{"planner": "zilot", "horizon": 3}, {"planner": "pi+cls", "threshold": "sweep"}],
      "seeds": [0, 1, 2, 3, 4],      # or "n_seeds": 5
      "episodes": 1
    }

Every (task, planner, seed) cell runs ``episodes`` episodes; its metrics are
the episode means. Results are sorted canonically before writing so the files
do not depend on the number of worker processes.
"""

from concurrent.futures import ProcessPoolExecutor
import csv
import json
import logging
import os

import numpy as np

from ._validation import ValidationError
from .baselines import THRESHOLDS, GoalClassifier, mpc_cls_episode, pi_cls_episode
from .envs import ENV_BUILDERS, build_env
from .mdp import EnvTaskConfig, env_from_dict, perturb_model
from .optim import IcemConfig
from .ot import SinkhornConfig
from .planner import ZilotConfig, zilot_episode
from .values import TableCache, compute_first_hit_distance, compute_goal_pair_times

__all__ = [
    "PLANNERS",
    "load_json",
    "load_task",
    "build_task_env",
    "make_planner",
    "run_experiment",
    "summarize",
]

logger = logging.getLogger(__name__)

PLANNERS = ("zilot", "zilot+h", "zilot+cls", "zilot+unbalanced", "pi+cls", "mpc+cls")
CELL_FIELDS = ("env", "task", "planner", "seed", "w_min", "goal_fraction", "n_steps", "diagnostics_path")
SUMMARY_COLUMNS = ("task", "planner", "w_min_mean", "w_min_std", "gf_mean", "gf_std")


def load_json(path):
    try:
        with open(path) as f:
            return json.load(f)
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc}") from None


# -- tasks ------------------------------------------------------------------


def load_task(spec, base_dir="."):
    """Normalize a task given inline or as a path to a task file."""
    if isinstance(spec, str):
        path = spec if os.path.isabs(spec) else os.path.join(base_dir, spec)
        task = load_json(path)
        task.setdefault("name", os.path.splitext(os.path.basename(path))[0])
        base_dir = os.path.dirname(path)
    elif isinstance(spec, dict):
        task = dict(spec)
    else:
        raise ValidationError(f"task must be a path or an object, got {type(spec).__name__}")
    for key in ("env", "goals", "horizon", "t_max"):
        if key not in task:
            raise ValidationError(f"task {task.get('name', '?')!r} is missing {key!r}")
    if isinstance(task["env"], str) and task["env"].endswith(".json"):
        env_path = task["env"] if os.path.isabs(task["env"]) else os.path.join(base_dir, task["env"])
        task["env"] = load_json(env_path)
    if isinstance(task["env"], str) and task["env"] not in ENV_BUILDERS:
        raise ValidationError(f"unknown environment {task['env']!r}; choose from {sorted(ENV_BUILDERS)}")
    task.setdefault("name", task["env"] if isinstance(task["env"], str) else "custom")
    task.setdefault("params", {})
    task.setdefault("model_noise", 0.0)
    task.setdefault("episodes", None)
    if not isinstance(task["goals"], list) or not task["goals"]:
        raise ValidationError(f"task {task['name']!r} needs a nonempty goal list")
    return task


def env_label(task):
    return task["env"] if isinstance(task["env"], str) else task["env"].get("name", "tabular")


class TaskEnv:
    """Environment, goal space, tables and goal sequence for one task."""

    def __init__(self, env, gs, d, w, goals, task):
        self.env, self.gs, self.d, self.w = env, gs, d, w
        self.goals = goals
        self.task = task
        self.continuous = bool(getattr(env, "is_continuous", False))
        noise = float(task.get("model_noise", 0.0))
        self.model = perturb_model(env, noise) if noise and not self.continuous else env
        self.plan_caches = {}

    @property
    def config(self):
        return EnvTaskConfig(int(self.task["horizon"]), int(self.task["t_max"]), tuple(self.goals))


def build_task_env(task, cache_dir=None):
    """Instantiate a task's environment and distance tables.

    Tabular tables go through :class:`TableCache` when ``cache_dir`` is set.
    """
    t_max = int(task["t_max"])
    if isinstance(task["env"], dict):
        env, gs = env_from_dict(task["env"])
    elif task["env"] == "pointmass":
        params = dict(task["params"])
        params.setdefault("t_max", t_max)
        env, gs, dist = build_env("pointmass", params)
        goals = [np.asarray(g, dtype=float).reshape(2) for g in task["goals"]]
        return TaskEnv(env, gs, dist, dist, goals, task)
    else:
        env, gs = build_env(task["env"], task["params"])
    goals = [gs.goal_index(g) for g in task["goals"]]
    if cache_dir is not None:
        d, w = TableCache(cache_dir).get(env, gs, t_max)
    else:
        d = compute_first_hit_distance(env, gs, t_max)
        w = compute_goal_pair_times(d, gs)
    return TaskEnv(env, gs, d, w, goals, task)


# -- planners ---------------------------------------------------------------


def _icem_from_block(block, horizon):
    params = {k: v for k, v in block.items() if k != "name"}
    params.setdefault("horizon", horizon)
    try:
        return IcemConfig(**params)
    except TypeError as exc:
        raise ValidationError(f"bad icem parameters: {exc}") from None


def _optimizer(block, horizon):
    opt = block.get("optimizer", "exhaustive")
    if opt == "exhaustive":
        return "exhaustive"
    if opt == "icem":
        return IcemConfig(horizon=horizon)
    if isinstance(opt, dict) and opt.get("name", "icem") == "icem":
        return _icem_from_block(opt, horizon)
    if isinstance(opt, dict) and opt.get("name") == "exhaustive":
        return "exhaustive"
    raise ValidationError(f"unknown optimizer {opt!r}")


def _thresholds(block):
    th = block.get("threshold", 1.0)
    if th == "sweep":
        return list(THRESHOLDS)
    ths = th if isinstance(th, list) else [th]
    for t in ths:
        if not isinstance(t, (int, float)) or not t > 0:
            raise ValidationError(f"threshold must be positive, got {t!r}")
    return [float(t) if not float(t).is_integer() else int(t) for t in ths]


def make_planner(block):
    """Validate a planner block and return a normalized copy.

    The result carries ``planner``, ``label``, ``horizon`` (or None),
    ``thresholds`` and the parsed optimizer and Sinkhorn settings.
    """
    if not isinstance(block, dict) or "planner" not in block:
        raise ValidationError("planner block must be an object with a 'planner' field")
    kind = block["planner"]
    if kind not in PLANNERS:
        raise ValidationError(f"unknown planner {kind!r}; choose from {PLANNERS}")
    horizon = block.get("horizon")
    if horizon is not None and (not isinstance(horizon, int) or horizon < 1):
        raise ValidationError(f"horizon must be a positive integer, got {horizon!r}")
    out = {"planner": kind, "label": block.get("name", kind), "horizon": horizon, "block": block}
    out["optimizer"] = _optimizer(block, horizon or 16)
    if kind.startswith("zilot"):
        sk = dict(block.get("sinkhorn", {}))
        try:
            sinkhorn = SinkhornConfig(
                eta=sk.get("eta", 0.02), iterations=sk.get("iterations", 500), xi_b=sk.get("xi_b")
            )
        except (TypeError, ValidationError) as exc:
            raise ValidationError(f"bad sinkhorn block: {exc}") from None
        out["config"] = ZilotConfig(
            horizon=horizon or 16,
            sinkhorn=sinkhorn,
            ot_method=block.get("ot", "sinkhorn"),
            cost_source="metric" if kind == "zilot+h" else "distance",
            unbalanced=kind == "zilot+unbalanced",
            cls_filter=kind == "zilot+cls",
            cls_threshold=1.0,
            optimizer=out["optimizer"],
            n_rollouts=block.get("n_rollouts", 16),
        )
        out["thresholds"] = _thresholds(block) if kind == "zilot+cls" else [None]
    else:
        out["thresholds"] = _thresholds(block)
    return out


def run_episode(te, planner, threshold, seed):
    """One episode of ``planner`` on the task environment ``te``."""
    cfg_task = te.config
    if planner["horizon"] is not None:
        cfg_task = EnvTaskConfig(planner["horizon"], cfg_task.t_max, cfg_task.goals)
    kind = planner["planner"]
    if kind.startswith("zilot"):
        cfg = planner["config"]
        if threshold is not None:
            cfg = ZilotConfig(**{**cfg.__dict__, "cls_threshold": threshold})
        cache = te.plan_caches.setdefault((json.dumps(planner["block"], sort_keys=True), threshold), {})
        res = zilot_episode(te.env, te.model, te.d, te.w, te.gs, cfg_task, cfg, seed, plan_cache=cache)
    elif kind == "pi+cls":
        res = pi_cls_episode(te.env, te.d, te.gs, cfg_task, GoalClassifier(threshold, te.d), seed)
    else:
        c = GoalClassifier(threshold, te.d)
        res = mpc_cls_episode(te.env, te.model, te.d, te.gs, cfg_task, c, planner["optimizer"], seed)
    res.planner = planner["label"]
    return res


def _episode_seed(seed, episode, n_episodes):
    if n_episodes == 1:
        return seed
    return np.random.SeedSequence(seed, spawn_key=(episode,))


def _cell_name(task, label, threshold, seed):
    th = "" if threshold is None else f"_th{threshold}"
    safe = "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in f"{task}__{label}{th}")
    return f"{safe}__seed{seed}.json"


_ENV_CACHE = {}


def _task_env(task, cache_dir):
    key = json.dumps(task, sort_keys=True)
    if key not in _ENV_CACHE:
        _ENV_CACHE[key] = build_task_env(task, cache_dir)
    return _ENV_CACHE[key]


def run_cell(job):
    """Run all episodes of one cell; writes its diagnostics file and returns the cell record."""
    task, planner_block, threshold, seed, episodes, out_dir, cache_dir = job
    planner = make_planner(planner_block)
    te = _task_env(task, cache_dir)
    results = [run_episode(te, planner, threshold, _episode_seed(seed, e, episodes)) for e in range(episodes)]
    rel = os.path.join("diagnostics", _cell_name(task["name"], planner["label"], threshold, seed))
    if out_dir is not None:
        payload = {
            "task": {k: task[k] for k in ("name", "env", "params", "goals", "horizon", "t_max")},
            "planner": planner["label"],
            "threshold": threshold,
            "seed": seed,
            "episodes": [r.to_dict() for r in results],
        }
        path = os.path.join(out_dir, rel)
        with open(path, "w") as f:
            json.dump(payload, f, sort_keys=True, default=_json_default)
    return {
        "env": env_label(task),
        "task": task["name"],
        "planner": planner["label"],
        "threshold": threshold,
        "seed": seed,
        "w_min": float(np.mean([r.w_min for r in results])),
        "goal_fraction": float(np.mean([r.goal_fraction for r in results])),
        "n_steps": float(np.mean([r.n_steps for r in results])) if episodes > 1 else results[0].n_steps,
        "diagnostics_path": rel,
    }


def _json_default(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.random.SeedSequence):
        return {"entropy": x.entropy, "spawn_key": list(x.spawn_key)}
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def _std(x):
    return float(np.std(x)) if len(x) > 1 else 0.0


def summarize(cells):
    """Per (task, planner) mean and std across seeds, in first-appearance order."""
    groups = {}
    for c in cells:
        groups.setdefault((c["task"], c["planner"]), []).append(c)
    rows = []
    for (task, planner), cs in groups.items():
        w = [c["w_min"] for c in cs]
        g = [c["goal_fraction"] for c in cs]
        rows.append(
            {
                "task": task,
                "planner": planner,
                "w_min_mean": float(np.mean(w)),
                "w_min_std": _std(w),
                "gf_mean": float(np.mean(g)),
                "gf_std": _std(g),
            }
        )
    return rows


def parse_config(config, base_dir=".", seed_base=0):
    """Validate a run configuration; raises ValidationError before anything runs."""
    if not isinstance(config, dict):
        raise ValidationError("run configuration must be a JSON object")
    if not config.get("tasks"):
        raise ValidationError("configuration needs a nonempty 'tasks' list")
    if not config.get("planners"):
        raise ValidationError("configuration needs a nonempty 'planners' list")
    tasks = [load_task(t, base_dir) for t in config["tasks"]]
    names = [t["name"] for t in tasks]
    if len(set(names)) != len(names):
        raise ValidationError(f"task names must be unique, got {names}")
    planners = [make_planner(p) for p in config["planners"]]
    labels = [p["label"] for p in planners]
    if len(set(labels)) != len(labels):
        raise ValidationError(f"planner names must be unique, got {labels}; set 'name' to disambiguate")
    if "seeds" in config:
        seeds = config["seeds"]
        if not isinstance(seeds, list) or not all(isinstance(s, int) and s >= 0 for s in seeds):
            raise ValidationError("seeds must be a list of nonnegative integers")
    else:
        n = config.get("n_seeds", 5)
        if not isinstance(n, int) or n < 1:
            raise ValidationError("n_seeds must be a positive integer")
        seeds = list(range(n))
    seeds = [int(seed_base) + s for s in seeds]
    episodes = config.get("episodes", 1)
    if not isinstance(episodes, int) or episodes < 1:
        raise ValidationError("episodes must be a positive integer")
    for t in tasks:
        if t["env"] == "pointmass":
            for p in planners:
                if p["planner"] == "pi+cls":
                    raise ValidationError("pi+cls needs a tabular environment")
    return tasks, planners, seeds, episodes


def run_experiment(config, out_dir, jobs=1, seed_base=0, base_dir=".", cache_dir=None):
    """Run every cell of the experiment matrix and write the result files.

    Writes ``results.json`` (one record per cell), ``summary.csv``, one
    diagnostics file per cell and, when a classifier threshold is swept,
    ``threshold_sweep.json``. Returns ``(cells, summary_rows)``.

    Planners with several thresholds (``"threshold": "sweep"``) run every
    threshold and keep, per task, the one with the lowest mean W_min (ties to
    the smaller threshold).
    """
    tasks, planners, seeds, episodes = parse_config(config, base_dir, seed_base)
    os.makedirs(os.path.join(out_dir, "diagnostics"), exist_ok=True)
    if cache_dir is None:
        cache_dir = config.get("cache_dir", os.path.join(out_dir, "cache"))
    # fill the table cache once before any worker starts
    for t in tasks:
        _task_env(t, cache_dir)

    jobs_list = []
    for ti, t in enumerate(tasks):
        n_ep = t["episodes"] or episodes
        for pi, p in enumerate(planners):
            for th in p["thresholds"]:
                for si, s in enumerate(seeds):
                    key = (ti, pi, -1 if th is None else th, si)
                    jobs_list.append((key, (t, p["block"], th, s, n_ep, out_dir, cache_dir)))
    logger.info("running %d cells on %d worker(s)", len(jobs_list), jobs)
    if jobs > 1 and len(jobs_list) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(run_cell, [j for _, j in jobs_list]))
    else:
        records = [run_cell(j) for _, j in jobs_list]
    keyed = sorted(zip([k for k, _ in jobs_list], records), key=lambda kr: kr[0])

    cells, sweep = [], {}
    for ti, t in enumerate(tasks):
        for pi, p in enumerate(planners):
            mine = [r for k, r in keyed if k[0] == ti and k[1] == pi]
            chosen = None
            if len(p["thresholds"]) > 1:
                means = {th: float(np.mean([r["w_min"] for r in mine if r["threshold"] == th])) for th in p["thresholds"]}
                chosen = min(p["thresholds"], key=lambda th: (means[th], th))
                sweep.setdefault(t["name"], {})[p["label"]] = {
                    "w_min_mean_by_threshold": {str(th): m for th, m in means.items()},
                    "chosen": chosen,
                }
                mine = [r for r in mine if r["threshold"] == chosen]
            cells.extend(mine)

    cells = [{k: v for k, v in c.items() if k in CELL_FIELDS} for c in cells]
    with open(os.path.join(out_dir, "results.json"), "w") as f:
        json.dump(cells, f, indent=2, sort_keys=True)
        f.write("\n")
    rows = summarize(cells)
    with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})
    if sweep:
        with open(os.path.join(out_dir, "threshold_sweep.json"), "w") as f:
            json.dump(sweep, f, indent=2, sort_keys=True)
            f.write("\n")
    return cells, rows
