"""Experiment configuration, multi-seed comparison runs and result files."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import SoftQConfig, integer_ramp, maxent_mixture, reward_mixing_loop
from .errors import InvalidSpecError
from .eve import EveConfig, format_value, parse_schedule, run_ppi
from .mdp import GridSpec, TabularMDP, build_gridworld, cliffworld, uniform_policy
from .oracle import max_entropy_occupancy

log = logging.getLogger(__name__)

METHOD_KINDS = ("eve", "soft_q_discounted", "soft_q_differential", "maxent")
RESULT_COLUMNS = ("method", "seed", "iteration", "entropy_nats", "residual", "lambda", "theta_star")
DEFAULT_GAMMAS = (0.8, 0.9, 0.95, 0.99)

_ALLOWED = {
    "eve": {"beta", "inner_iters", "ppi_iters", "tol", "use_log_space"},
    "soft_q_discounted": {"gamma", "mix_rate", "inner_steps", "outer_iters", "beta_max"},
    "soft_q_differential": {"mix_rate", "inner_steps", "outer_iters", "beta_max"},
    "maxent": {"outer_iters", "inner_steps", "beta", "step_rule"},
}


@dataclass(frozen=True)
class MethodSpec:
    kind: str
    label: str
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data, where="methods"):
        if not isinstance(data, dict) or "method" not in data:
            raise InvalidSpecError(f"{where}: each method needs a 'method' key", field=where)
        kind = data["method"]
        if kind not in METHOD_KINDS:
            raise InvalidSpecError(f"{where}.method: unknown method {kind!r}", field=f"{where}.method")
        params = {k: v for k, v in data.items() if k not in ("method", "label")}
        unknown = set(params) - _ALLOWED[kind]
        if unknown:
            bad = sorted(unknown)[0]
            raise InvalidSpecError(f"{where}.{bad}: not a parameter of {kind}", field=f"{where}.{bad}")
        label = data.get("label") or _default_label(kind, params)
        spec = cls(kind, label, params)
        try:
            spec.build_config()
        except InvalidSpecError as exc:
            raise InvalidSpecError(f"{where}.{exc.field}: {exc}", field=f"{where}.{exc.field}") from None
        return spec

    def to_dict(self):
        return {"method": self.kind, "label": self.label, **self.params}

    def build_config(self):
        p = self.params
        if self.kind == "eve":
            ppi = p.get("ppi_iters", 30)
            return EveConfig(
                beta_schedule=parse_schedule(str(p.get("beta", "1")), ppi),
                inner_iters=p.get("inner_iters", 200),
                ppi_iters=ppi,
                fixed_point_tol=p.get("tol", 1e-10),
                use_log_space=bool(p.get("use_log_space", False)),
            )
        if self.kind in ("soft_q_discounted", "soft_q_differential"):
            outer = p.get("outer_iters", 100)
            return SoftQConfig(
                gamma=p.get("gamma", 0.99) if self.kind == "soft_q_discounted" else None,
                beta_schedule=integer_ramp(1, p.get("beta_max", 10), outer),
                inner_steps=p.get("inner_steps", 50),
                mix_rate=p.get("mix_rate", 0.01),
                outer_iters=outer,
            )
        rule = p.get("step_rule", "line_search")
        if rule not in ("line_search", "harmonic"):
            raise InvalidSpecError(f"unknown step rule {rule!r}", field="step_rule")
        outer = p.get("outer_iters", 100)
        if not isinstance(outer, int) or outer < 1:
            raise InvalidSpecError("outer_iters must be a positive integer", field="outer_iters")
        return {
            "outer_iters": outer,
            "inner_steps": p.get("inner_steps", 50),
            "beta": float(p.get("beta", 64.0)),
            "step_rule": rule,
        }


def _default_label(kind, params):
    if kind == "soft_q_discounted":
        return f"soft_q_discounted(gamma={params.get('gamma', 0.99)})"
    return kind


def default_methods():
    methods = [MethodSpec("eve", "eve")]
    methods += [MethodSpec.from_dict({"method": "soft_q_discounted", "gamma": g}) for g in DEFAULT_GAMMAS]
    methods.append(MethodSpec("soft_q_differential", "soft_q_differential"))
    methods.append(MethodSpec("maxent", "maxent"))
    return methods


def _load_env(value, base_dir):
    if value is None or value == "cliffworld":
        return cliffworld()
    if isinstance(value, dict):
        return GridSpec.from_dict(value)
    if isinstance(value, str):
        path = Path(value)
        if not path.is_absolute() and base_dir is not None:
            path = Path(base_dir) / path
        if not path.exists():
            raise InvalidSpecError(f"env: file {value!r} not found", field="env")
        return GridSpec.load(path)
    raise InvalidSpecError("env must be 'cliffworld', an object, or a path", field="env")


@dataclass
class ExperimentConfig:
    env: GridSpec
    methods: list
    seeds: list
    output_dir: Path = Path("results")

    def __post_init__(self):
        if not self.methods:
            raise InvalidSpecError("at least one method is required", field="methods")
        if not self.seeds:
            raise InvalidSpecError("seeds must be nonempty", field="seeds")
        if not all(isinstance(s, int) and not isinstance(s, bool) for s in self.seeds):
            raise InvalidSpecError("seeds must be integers", field="seeds")
        labels = [m.label for m in self.methods]
        if len(set(labels)) != len(labels):
            raise InvalidSpecError("method labels must be unique", field="methods")
        self.output_dir = Path(self.output_dir)

    @classmethod
    def from_dict(cls, data, base_dir=None):
        if not isinstance(data, dict):
            raise InvalidSpecError("experiment config must be a JSON object", field="config")
        env = _load_env(data.get("env"), base_dir)
        raw = data.get("methods")
        if raw is None:
            methods = default_methods()
        elif isinstance(raw, list):
            methods = [MethodSpec.from_dict(m, f"methods[{i}]") for i, m in enumerate(raw)]
        else:
            raise InvalidSpecError("methods must be a list", field="methods")
        seeds = data.get("seeds", [0, 1, 2, 3, 4])
        if not isinstance(seeds, list):
            raise InvalidSpecError("seeds must be a list of integers", field="seeds")
        out = data.get("output_dir", "results")
        if base_dir is not None and not Path(out).is_absolute():
            out = Path(base_dir) / out
        return cls(env, methods, seeds, Path(out))

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise InvalidSpecError(f"malformed JSON in {path}: {exc}", field="config") from exc
        return cls.from_dict(data, base_dir=path.parent)

    def to_dict(self):
        return {
            "env": self.env.to_dict(),
            "methods": [m.to_dict() for m in self.methods],
            "seeds": list(self.seeds),
            "output_dir": str(self.output_dir),
        }


@dataclass
class ResultRow:
    method: str
    seed: int
    iteration: int
    entropy_nats: float
    residual: float
    lambda_: float | None = None
    theta_star: float | None = None

    def as_csv(self):
        return [
            self.method,
            str(self.seed),
            str(self.iteration),
            format_value(self.entropy_nats),
            format_value(self.residual),
            format_value(self.lambda_),
            format_value(self.theta_star),
        ]


@dataclass
class MethodRun:
    label: str
    seed: int
    rows: list
    error: str | None = None
    extra: dict = field(default_factory=dict)


def run_method(spec: MethodSpec, mdp: TabularMDP, seed: int) -> MethodRun:
    """Run one (method, seed) pair. Failures are captured, not raised."""
    rng = np.random.default_rng(seed)
    cfg = spec.build_config()
    rows = []
    try:
        if spec.kind == "eve":
            u0 = rng.uniform(0.5, 2.0, mdp.n_pairs)
            _, trace = run_ppi(mdp, uniform_policy(mdp), cfg, u0=u0)
            for r in trace.records:
                rows.append(ResultRow(spec.label, seed, r.steps, r.entropy_stationary, r.residual, r.lam, r.theta_star))
            error = trace.failure
            extra = {"entropy_rate": trace.column("entropy_uv").tolist()}
        elif spec.kind == "maxent":
            q0 = np.log(rng.uniform(0.5, 2.0, mdp.n_pairs))
            mix, trace = maxent_mixture(mdp, q_init=q0, **cfg)
            for r in trace.records:
                rows.append(ResultRow(spec.label, seed, r.steps, r.entropy, r.residual))
            error = None
            extra = {"components": len(mix.components)}
        else:
            q0 = np.log(rng.uniform(0.5, 2.0, mdp.n_pairs))
            mode = "discounted" if spec.kind == "soft_q_discounted" else "differential"
            _, trace = reward_mixing_loop(mdp, cfg, mode, q_init=q0)
            for r in trace.records:
                rows.append(ResultRow(spec.label, seed, r.steps, r.entropy, r.residual))
            error = None
            extra = {}
    except Exception as exc:  # recorded per run; the comparison carries on
        log.exception("%s seed %d failed", spec.label, seed)
        return MethodRun(spec.label, seed, rows, error=f"{type(exc).__name__}: {exc}")
    return MethodRun(spec.label, seed, rows, error=error, extra=extra)


def _run_job(args):
    spec, mdp, seed = args
    return run_method(spec, mdp, seed)


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> list:
    """All (method, seed) runs in config order."""
    mdp = build_gridworld(config.env)
    work = [(spec, mdp, seed) for spec in config.methods for seed in config.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_job, work))
    return [_run_job(w) for w in work]


def atomic_write_text(path, text):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def results_csv_text(runs) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for run in runs:
        for row in run.rows:
            writer.writerow(row.as_csv())
    return buf.getvalue()


def read_results_csv(path) -> list:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                ResultRow(
                    rec["method"],
                    int(rec["seed"]),
                    int(rec["iteration"]),
                    float(rec["entropy_nats"]),
                    float(rec["residual"]),
                    float(rec["lambda"]) if rec["lambda"] else None,
                    float(rec["theta_star"]) if rec["theta_star"] else None,
                )
            )
    return rows


@dataclass
class Curve:
    """Mean and standard deviation across seeds on a shared iteration grid."""

    label: str
    iterations: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    finals: np.ndarray


def mean_curves(runs) -> dict:
    """Per-method curves; each seed is held constant after its own records.

    The grid is the union of recorded iterations, starting where every seed
    has at least one record.
    """
    by_label = {}
    for run in runs:
        if run.rows:
            by_label.setdefault(run.label, []).append(run)
    curves = {}
    for label, group in by_label.items():
        xs = [np.array([r.iteration for r in run.rows]) for run in group]
        ys = [np.array([r.entropy_nats for r in run.rows]) for run in group]
        start = max(x[0] for x in xs)
        grid = np.unique(np.concatenate(xs))
        grid = grid[grid >= start]
        vals = np.stack([y[np.searchsorted(x, grid, side="right") - 1] for x, y in zip(xs, ys)])
        curves[label] = Curve(label, grid, vals.mean(axis=0), vals.std(axis=0), np.array([y[-1] for y in ys]))
    return curves


def steps_to_fraction(curve: Curve, fraction: float = 0.95) -> int | None:
    """First iteration at which the mean curve reaches ``fraction`` of its final value."""
    target = fraction * curve.mean[-1]
    hit = np.flatnonzero(curve.mean >= target)
    return int(curve.iterations[hit[0]]) if hit.size else None


def summarize(config: ExperimentConfig, runs, oracle_entropy=None) -> dict:
    mdp = build_gridworld(config.env)
    curves = mean_curves(runs)
    methods = {}
    for spec in config.methods:
        mine = [r for r in runs if r.label == spec.label]
        entry = {
            "method": spec.kind,
            "seeds_completed": sum(1 for r in mine if r.rows and r.error is None),
            "failures": {str(r.seed): r.error for r in mine if r.error},
        }
        curve = curves.get(spec.label)
        if curve is not None:
            entry.update(
                final_mean_entropy=float(curve.finals.mean()),
                final_std_entropy=float(curve.finals.std()),
                steps_to_95pct=steps_to_fraction(curve),
                total_steps=int(curve.iterations[-1]),
            )
        methods[spec.label] = entry
    return {
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "max_possible_entropy": math.log(mdp.n_pairs),
        "oracle_entropy": oracle_entropy,
        "methods": methods,
    }


def run_compare(config: ExperimentConfig, jobs: int = 1):
    """Run the comparison and write results.csv, figure.svg and summary.json.

    Returns ``(runs, summary)``.
    """
    from .plotting import plot_entropy_curves

    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    runs = run_experiment(config, jobs=jobs)
    oracle = max_entropy_occupancy(build_gridworld(config.env)).entropy_star
    atomic_write_text(out / "results.csv", results_csv_text(runs))
    summary = summarize(config, runs, oracle_entropy=oracle)
    atomic_write_text(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    plot_entropy_curves(
        mean_curves(runs),
        out / "figure.svg",
        references={"oracle max": oracle, "log |S||A|": summary["max_possible_entropy"]},
    )
    return runs, summary
