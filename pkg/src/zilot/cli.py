"""Command line entry point.

Exit codes: 0 on success, 2 for configuration errors, 3 for runtime failures.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from ._validation import ValidationError
from .envs import build_env
from .harness import build_task_env, load_json, load_task, run_experiment
from .mdp import env_from_dict, env_to_dict
from .metrics import goal_fraction, w_min
from .ot import OtProblem, SinkhornConfig, sinkhorn, sinkhorn_unbalanced, transport_simplex

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _params(text):
    if text is None:
        return {}
    try:
        params = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"--params is not valid JSON: {exc}") from None
    if not isinstance(params, dict):
        raise ValidationError("--params must be a JSON object")
    return params


def cmd_run(args):
    config = load_json(args.config)
    if args.jobs < 1:
        raise ValidationError("--jobs must be >= 1")
    cells, rows = run_experiment(
        config, args.out, jobs=args.jobs, seed_base=args.seed_base, base_dir=os.path.dirname(os.path.abspath(args.config))
    )
    print(f"wrote {len(cells)} cells and {len(rows)} summary rows to {args.out}")


def _recompute(task, trajectory):
    te = build_task_env(load_task(task))
    traj = [np.asarray(s, dtype=float) for s in trajectory] if te.continuous else [int(s) for s in trajectory]
    return {"w_min": w_min(traj, te.goals, te.gs), "goal_fraction": goal_fraction(traj, te.goals, te.gs)}


def cmd_metrics(args):
    """Recompute metrics from a diagnostics file or a {task, trajectory} file."""
    data = load_json(args.path)
    task = data.get("task")
    if args.task is not None:
        task = load_json(args.task)
    if task is None:
        raise ValidationError("no task in the file; pass --task")
    if "episodes" in data:
        out = [_recompute(task, ep["trajectory"]) for ep in data["episodes"]]
    elif "trajectory" in data:
        out = _recompute(task, data["trajectory"])
    else:
        raise ValidationError("file holds neither 'episodes' nor 'trajectory'")
    print(json.dumps(out, indent=2))


def cmd_env_dump(args):
    if args.task is not None:
        task = load_task(args.task)
        name, params = task["env"], task["params"]
    elif args.name is not None:
        name, params = args.name, _params(args.params)
    else:
        raise ValidationError("env dump needs an environment name or --task")
    if isinstance(name, dict):
        env, gs = env_from_dict(name)
        out = env_to_dict(env, gs)
    elif name == "pointmass":
        env, gs, dist = build_env(name, params)
        out = {
            "name": "pointmass",
            "low": env.low.tolist(),
            "high": env.high.tolist(),
            "dt": env.dt,
            "v_max": env.v_max,
            "start": env.start.tolist(),
            "epsilon": gs.epsilon,
            "t_max": dist.t_max,
        }
    else:
        env, gs = build_env(name, params)
        out = env_to_dict(env, gs)
    print(json.dumps(out, indent=None if args.compact else 2))


def cmd_ot_solve(args):
    problem = OtProblem.from_dict(load_json(args.problem))
    if args.method == "simplex":
        plan = transport_simplex(problem)
    elif args.method == "sinkhorn":
        plan = sinkhorn(problem, SinkhornConfig(args.eta, args.iterations))
    else:
        plan = sinkhorn_unbalanced(problem, SinkhornConfig(args.eta, args.iterations, args.xi_b))
    print(json.dumps(plan.to_dict(), indent=2))


def build_parser():
    p = _Parser(prog="zilot", description="Zero-shot trajectory matching planners and benchmarks.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run an experiment matrix")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--seed-base", type=int, default=0)
    r.set_defaults(func=cmd_run)

    m = sub.add_parser("metrics", help="recompute W_min and GoalFraction from a stored trajectory")
    m.add_argument("path")
    m.add_argument("--task", help="task file when the trajectory file does not embed one")
    m.set_defaults(func=cmd_metrics)

    e = sub.add_parser("env", help="environment utilities")
    esub = e.add_subparsers(dest="env_command", required=True, parser_class=_Parser)
    ed = esub.add_parser("dump", help="print an environment definition as JSON")
    ed.add_argument("name", nargs="?", help="built-in environment name")
    ed.add_argument("--params", help="constructor parameters as a JSON object")
    ed.add_argument("--task", help="take the environment from a task file")
    ed.add_argument("--compact", action="store_true")
    ed.set_defaults(func=cmd_env_dump)

    o = sub.add_parser("ot", help="optimal transport utilities")
    osub = o.add_subparsers(dest="ot_command", required=True, parser_class=_Parser)
    os_ = osub.add_parser("solve", help="solve an OT problem given as JSON {cost, source_weights?, target_weights?}")
    os_.add_argument("problem")
    os_.add_argument("--method", choices=("simplex", "sinkhorn", "unbalanced"), default="simplex")
    os_.add_argument("--eta", type=float, default=0.02)
    os_.add_argument("--iterations", type=int, default=500)
    os_.add_argument("--xi-b", type=float, default=1.0)
    os_.set_defaults(func=cmd_ot_solve)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except ValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # anything past validation is a runtime failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
