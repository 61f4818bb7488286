"""Command-line entry point.

Exit codes: 0 success, 1 invalid input, 2 numerical failure
(non-convergence or an imprimitive chain).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .errors import ConvergenceError, ImprimitiveError, InvalidSpecError
from .eve import EveConfig, parse_schedule, run_ppi
from .harness import ExperimentConfig, atomic_write_text, run_compare
from .mdp import GridSpec, build_gridworld, cliffworld, index_of_primitivity, is_ergodic, sa_operator
from .mdp import uniform_policy, validate_policy
from .plotting import plot_ppi_trace
from .spectral import entropy, stationary_distribution

log = logging.getLogger("eigexplore")

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2


def _dump_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2) + "\n")


def _fail(exc):
    where = f" [{exc.field}]" if getattr(exc, "field", None) else ""
    print(f"error{where}: {exc}", file=sys.stderr)
    return EXIT_INVALID


def cmd_solve(args):
    try:
        spec = GridSpec.load(args.env)
        mdp = build_gridworld(spec)
        cfg = EveConfig(
            beta_schedule=parse_schedule(args.beta, args.ppi_iters),
            inner_iters=args.inner_iters,
            ppi_iters=args.ppi_iters,
            fixed_point_tol=args.tol,
            use_log_space=args.log_space,
        )
    except (InvalidSpecError, OSError) as exc:
        return _fail(exc)

    u0 = None
    if args.seed is not None:
        u0 = np.random.default_rng(args.seed).uniform(0.5, 2.0, mdp.n_pairs)
    policy, trace = run_ppi(mdp, uniform_policy(mdp), cfg, u0=u0)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace.write_csv(out / "trace.csv")
    _dump_json(out / "policy.json", policy.tolist())
    if trace.u is not None:
        _dump_json(out / "distribution.json", (trace.u * trace.v).tolist())
    if trace.records:
        plot_ppi_trace(trace, out / "trace.svg")
        last = trace.records[-1]
        print(f"entropy_nats={last.entropy_stationary:.12f} theta_star={last.theta_star:.12f} "
              f"ppi_iters={last.t} steps={last.steps} residual={last.residual:.3e}")
    if trace.failure:
        print(f"error: {trace.failure}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK if trace.converged else EXIT_NUMERIC


def _load_policy(path, mdp):
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidSpecError(f"malformed JSON in {path}: {exc}", field="policy") from exc
    if isinstance(data, dict):
        data = data.get("probs")
    if not isinstance(data, list):
        raise InvalidSpecError("policy must be a list of rows", field="policy")
    try:
        probs = np.array(data, dtype=float)
    except (TypeError, ValueError):
        raise InvalidSpecError("policy rows must be numeric and equally long", field="policy") from None
    return validate_policy(probs, mdp, atol=1e-9)


def cmd_eval(args):
    try:
        mdp = build_gridworld(GridSpec.load(args.env))
        policy = _load_policy(args.policy, mdp)
    except (InvalidSpecError, OSError) as exc:
        return _fail(exc)
    op = sa_operator(mdp, policy / policy.sum(axis=1, keepdims=True))
    if not is_ergodic(op):
        print("error: policy support induces an imprimitive chain", file=sys.stderr)
        return EXIT_NUMERIC
    try:
        d = stationary_distribution(op)
    except (ImprimitiveError, ConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    out = Path(args.out) if args.out else Path(args.policy).with_name("stationary_distribution.json")
    _dump_json(out, d.tolist())
    print(f"entropy_nats={entropy(d):.17g}")
    return EXIT_OK


def cmd_compare(args):
    try:
        config = ExperimentConfig.load(args.config)
    except (InvalidSpecError, OSError) as exc:
        return _fail(exc)
    if args.out:
        config.output_dir = Path(args.out)
    runs, summary = run_compare(config, jobs=args.jobs)
    for label, entry in summary["methods"].items():
        if "final_mean_entropy" in entry:
            print(f"{label:32s} final={entry['final_mean_entropy']:.6f} +/- {entry['final_std_entropy']:.2e} "
                  f"steps_to_95%={entry['steps_to_95pct']}")
        else:
            print(f"{label:32s} failed")
    completed = any(e["seeds_completed"] > 0 for e in summary["methods"].values())
    return EXIT_OK if completed else EXIT_NUMERIC


def cmd_env(args):
    if args.preset:
        spec = cliffworld()
        if args.out:
            spec.dump(args.out)
        else:
            print(json.dumps(spec.to_dict(), indent=2))
        return EXIT_OK
    try:
        spec = GridSpec.load(args.validate)
        mdp = build_gridworld(spec)
        m = index_of_primitivity(sa_operator(mdp, uniform_policy(mdp)))
    except (InvalidSpecError, ImprimitiveError, OSError) as exc:
        return _fail(exc)
    print(f"valid: |S|={mdp.n_states} |A|={mdp.n_actions} m={m} log|S||A|={math.log(mdp.n_pairs):.6f}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="eigexplore", description="Maximum-entropy exploration via EVE.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run EVE with posterior policy iteration")
    p.add_argument("--env", required=True)
    p.add_argument("--beta", default="1", help="constant (e.g. 1) or linear:START:STOP")
    p.add_argument("--inner-iters", type=int, default=200)
    p.add_argument("--ppi-iters", type=int, default=30)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--log-space", action="store_true", help="iterate q = log u (beta must be 1)")
    p.add_argument("--out", default="eve_out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("eval", help="entropy of a policy's stationary distribution")
    p.add_argument("--env", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="multi-seed comparison of EVE and baselines")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="override output_dir from the config")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("env", help="write or validate an environment file")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--preset", choices=["cliffworld"])
    g.add_argument("--validate", metavar="FILE")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_env)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * args.verbose
    logging.basicConfig(level=max(level, logging.DEBUG), format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
