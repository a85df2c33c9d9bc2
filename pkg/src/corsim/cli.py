"""Command-line entry point.

Subcommands:
  run        execute the experiment matrix (resumable)
  calibrate  scale scenario demand templates to the utilization target
  plan       regenerate the coordinated-actuated baseline plan fixtures
  report     re-aggregate existing run outputs without simulating
  oracle     brute-force self-checks of the planner on small instances

Exit codes: 0 success, 1 configuration error, 2 run failures present.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .config import ConfigError, load_experiment, save_plan, save_scenario


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="corsim", description=__doc__)
    parser.add_argument("--version", action="version", version=f"corsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute the experiment matrix")
    _common(run_p)
    run_p.add_argument("--jobs", type=int, default=_default_jobs())
    run_p.add_argument("--seed-offset", type=int, default=0)

    cal_p = sub.add_parser("calibrate", help="calibrate scenario demand tables")
    _common(cal_p)
    cal_p.add_argument("--target-y", type=float, default=None,
                       help="critical flow-ratio sum target (default derived from X_c 0.75)")

    plan_p = sub.add_parser("plan", help="generate CA baseline plan fixtures")
    _common(plan_p)
    plan_p.add_argument("--scenario", default=None, help="limit to one scenario")
    plan_p.add_argument("--budget", type=int, default=120,
                        help="max evaluator calls for the hill climb")
    plan_p.add_argument("--skip-hill-climb", action="store_true",
                        help="emit the Webster seed plan without searching")

    rep_p = sub.add_parser("report", help="aggregate existing outputs only")
    _common(rep_p)

    orc_p = sub.add_parser("oracle", help="planner brute-force self-checks")
    orc_p.add_argument("--instances", type=int, default=50)
    orc_p.add_argument("--seed", type=int, default=20240901)
    orc_p.add_argument("--t-max", type=int, default=40)

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as e:
        for line in e.errors:
            print(f"config error: {line}", file=sys.stderr)
        return 1


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default="configs/default.yaml")
    p.add_argument("--out", default=None, help="override the output directory")


def _default_jobs() -> int:
    env = os.environ.get("CORSIM_JOBS")
    if env:
        return max(1, int(env))
    return 1


def _dispatch(args) -> int:
    if args.command == "oracle":
        return _cmd_oracle(args)
    exp = load_experiment(args.config)
    if args.out:
        exp.matrix.output_dir = args.out
    if args.command == "run":
        return _cmd_run(exp, args)
    if args.command == "calibrate":
        return _cmd_calibrate(exp, args)
    if args.command == "plan":
        return _cmd_plan(exp, args)
    if args.command == "report":
        return _cmd_report(exp)
    raise AssertionError(args.command)


def _cmd_run(exp, args) -> int:
    from .experiment import run_matrix

    missing = [
        name
        for name in exp.matrix.scenarios
        if name not in exp.plans
        and ("CA" in exp.matrix.strategies
             or ("PAA" in exp.matrix.strategies and exp.paa_priority))
    ]
    if missing:
        raise ConfigError(
            [f"timing plan fixture missing for scenario {m!r}; run `corsim plan`"
             for m in missing]
        )
    summary = run_matrix(exp, jobs=max(1, args.jobs), seed_offset=args.seed_offset)
    print(
        f"cells ok: {summary['cells_ok']}/{summary['cells_total']}"
        + (f", FAILED: {summary['cells_failed']}" if summary["cells_failed"] else "")
    )
    for cell, err in summary.get("failures", {}).items():
        print(f"  failed {cell}: {err}", file=sys.stderr)
    print(f"aggregates in {exp.matrix.output_dir}")
    return 2 if summary["cells_failed"] else 0


def _cmd_calibrate(exp, args) -> int:
    from .calibrate import calibrate_and_verify

    target = args.target_y
    base = os.path.dirname(exp.source_path)
    for name in exp.matrix.scenarios:
        scenario, report = calibrate_and_verify(exp, name, target_y=target)
        path = os.path.join(base, "scenarios", f"{name}.yaml")
        save_scenario(scenario, path)
        print(f"{name}: {report} -> {path}")
    return 0


def _cmd_plan(exp, args) -> int:
    from .baseline import generate_ca_plan

    base = os.path.dirname(exp.source_path)
    names = [args.scenario] if args.scenario else list(exp.matrix.scenarios)
    for name in names:
        plan, pi = generate_ca_plan(
            exp, name, budget=args.budget, skip_hill_climb=args.skip_hill_climb
        )
        path = os.path.join(base, "plans", f"{name}.yaml")
        save_plan(plan, path)
        print(f"{name}: cycle={plan.cycle}s offsets={plan.offsets} PI={pi:.3f} -> {path}")
    return 0


def _cmd_report(exp) -> int:
    from .experiment import aggregate, cell_dir, cell_digest

    results = {}
    failures = {}
    for cell in exp.matrix.cells():
        d = cell_dir(exp, *cell)
        spath = os.path.join(d, "summary.json")
        if os.path.exists(spath):
            with open(spath) as fh:
                results[cell] = json.load(fh)
        else:
            failures[cell] = "missing output"
    summary = aggregate(exp, results, failures)
    print(f"aggregated {summary['cells_ok']} cells into {exp.matrix.output_dir}")
    return 2 if failures else 0


def _cmd_oracle(args) -> int:
    from .oracle import run_oracle_suite

    ok, report = run_oracle_suite(
        instances=args.instances, seed=args.seed, t_max=args.t_max
    )
    print(report)
    return 0 if ok else 2


if __name__ == "__main__":
    sys.exit(main())
