"""Command-line experiment runner.

Usage::

    precision-margin run --config exp.yaml [--workers N] [--reps R] [--mc-n N]
                         [--seed S] [--out DIR]
    precision-margin run --preset table5-exp-bias
    precision-margin presets
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Sequence

import jsonschema
import yaml

from .bench import exp_bias_table, make_problem, replicate, variance_balance_study
from .rngstat import SeededStream
from .solve import OptimizerConfig, StrategyConfig

__all__ = ["CONFIG_SCHEMA", "list_presets", "preset_path", "load_config", "run_experiment", "main"]

SCHEMA_VERSION = 1
OUTPUT_SCHEMA_VERSION = 1

PRESETS = (
    "fig1-tension-meff",
    "fig3-mil",
    "fig4-mip",
    "table3-beam-m100",
    "table4-beam-m1000",
    "table5-exp-bias",
    "appD-variance-balance",
)

_PROB = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}
_COUNT = {"type": "integer", "minimum": 1}

_STRATEGY_SCHEMA = {
    "type": "object",
    "required": ["strategy"],
    "additionalProperties": False,
    "properties": {
        "strategy": {"enum": ["plug_in", "regulated", "mixed_bv", "mil", "mip", "cri", "pri"]},
        "confidence": _PROB,
        "basis": {"type": "array", "items": _PROB, "minItems": 2, "maxItems": 2},
        "margin_model": {"enum": ["delta", "exact"]},
        "cri_convention": {"enum": ["exceed", "below"]},
        "n_outer": _COUNT,
        "centered_gradient": {"type": "boolean"},
        "mc_error_in_margin": {"type": "boolean"},
        "regulated_factor": {"type": "number", "exclusiveMinimum": 0},
        "max_outer_iters": _COUNT,
        "cost_tolerance": {"type": "number", "exclusiveMinimum": 0},
        "damping": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "multistart": _COUNT,
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "problem", "m_grid", "seed"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "study": {"enum": ["replicate", "exp_bias", "variance_balance"]},
        "problem": {"enum": ["tension", "beam", "exponential"]},
        "strategies": {"type": "array", "items": _STRATEGY_SCHEMA, "minItems": 1},
        "reliability_targets": {"type": "array", "items": _PROB, "minItems": 1},
        "m_grid": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
        "n_grid": {"type": "array", "items": _COUNT, "minItems": 1},
        "reps": _COUNT,
        "mc_n": {"type": "integer", "minimum": 1000},
        "score_n": _COUNT,
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "cov_convention": {"enum": ["chi2", "printed"]},
        "failure_target": _PROB,
        "alpha": _PROB,
        "n_outer": _COUNT,
        "cri_convention": {"enum": ["exceed", "below"]},
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "format": {"enum": ["csv", "json"]},
            },
        },
    },
    "allOf": [
        {
            "if": {"properties": {"study": {"const": "replicate"}}},
            "then": {"required": ["strategies"]},
        },
        {
            "if": {"not": {"required": ["study"]}},
            "then": {"required": ["strategies"]},
        },
    ],
}


class ConfigError(Exception):
    """Schema violation, reported as ``path:line: message``."""


def list_presets() -> list:
    return list(PRESETS)


def preset_path(name: str) -> Path:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}")
    return Path(str(resources.files("precision_margin").joinpath("presets", f"{name}.yaml")))


def _node_at(node, path) -> Optional[yaml.Node]:
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == key:
                    nxt = v
                    break
            if nxt is None:
                return node
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            return node
    return node


def load_config(path) -> dict:
    """Read and validate a YAML experiment config.

    Raises
    ------
    ConfigError
        With a message anchored at the offending line.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"{path}: cannot read config: {err.strerror}") from None
    try:
        data = yaml.safe_load(text)
        root = yaml.compose(text)
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        line = mark.line + 1 if mark else 1
        raise ConfigError(f"{path}:{line}: invalid YAML: {getattr(err, 'problem', err)}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}:1: config must be a mapping")
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        node = _node_at(root, list(err.absolute_path))
        line = node.start_mark.line + 1 if node is not None else 1
        where = "/".join(map(str, err.absolute_path)) or "<root>"
        raise ConfigError(f"{path}:{line}: {where}: {err.message}")
    return data


# ---------------------------------------------------------- serialization


def _fmt(x: Any) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        return "nan" if math.isnan(x) else format(x, ".17g")
    return "" if x is None else str(x)


def _json(x: Any) -> str:
    if isinstance(x, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_json(v)}" for k, v in x.items()) + "}"
    if isinstance(x, (list, tuple)):
        return "[" + ", ".join(_json(v) for v in x) + "]"
    if isinstance(x, bool) or x is None:
        return json.dumps(x)
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        return "null" if not math.isfinite(x) else format(x, ".17g")
    return json.dumps(str(x))


def _write_table(path: Path, rows: list, fmt: str) -> None:
    if fmt == "json":
        doc = {"schema_version": OUTPUT_SCHEMA_VERSION, "rows": rows}
        path.write_text(_json(doc) + "\n")
        return
    header = list(rows[0]) if rows else []
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for r in rows:
        writer.writerow([_fmt(r.get(h)) for h in header])
    path.write_text(buf.getvalue())


# -------------------------------------------------------------- running


def _strategy_config(spec: dict, target: Optional[float], mc_n: int) -> StrategyConfig:
    spec = dict(spec)
    opt_keys = ("max_outer_iters", "cost_tolerance", "damping", "multistart")
    opt = OptimizerConfig(**{k: spec.pop(k) for k in opt_keys if k in spec})
    if "basis" in spec:
        spec["basis"] = tuple(spec["basis"])
    return StrategyConfig(reliability_target=target, mc_n=mc_n, optimizer=opt, **spec)


def _replicate_rows(cfg: dict, workers: int) -> tuple[list, list]:
    problem = make_problem(cfg["problem"])
    targets = cfg.get("reliability_targets") or list(problem.targets[:1])
    reps = cfg.get("reps", 100)
    mc_n = cfg.get("mc_n", 10_000)
    records, aggregates = [], []
    K = problem.n_limit_states
    for s_idx, spec in enumerate(cfg["strategies"]):
        for t_idx, target in enumerate(targets):
            for m_idx, m in enumerate(cfg["m_grid"]):
                sc = _strategy_config(spec, target, mc_n)
                stream = SeededStream(cfg["seed"], 0, (s_idx, t_idx, m_idx))
                rep = replicate(problem, sc, m, reps, stream, workers=workers,
                                score_n=cfg.get("score_n", 100_000),
                                cov_convention=cfg.get("cov_convention", "chi2"))
                for r in rep.records:
                    row = {"rep": r.rep, "m": r.m, "strategy": r.strategy, "target": target}
                    for name, v in zip(problem.design_names, r.d_star):
                        row[f"d_{name}"] = v
                    row["cost"] = r.cost
                    row["m_eff"] = r.m_eff
                    for j in range(K):
                        row[f"r_eff_{j + 1}"] = r.r_eff[j]
                    for j in range(K):
                        key = "margin_value" if j == 0 else f"margin_value_{j + 1}"
                        row[key] = r.margins[j] if j < len(r.margins) else math.nan
                    row["feasible"] = r.feasible
                    row["error_code"] = r.error_code
                    records.append(row)
                agg = {"strategy": sc.strategy.value, "m": m, "target": target,
                       "n_reps": rep.aggregates["n_reps"],
                       "n_feasible": rep.aggregates["n_feasible"],
                       "infeasible_fraction": rep.infeasible_fraction,
                       "coverage": rep.coverage, "coverage_se": rep.coverage_se}
                for key in ["cost", "m_eff"] + [f"r_eff_{j + 1}" for j in range(K)]:
                    stats = rep.aggregates.get(key, {})
                    for stat in ("mean", "se", "ci95_low", "ci95_high",
                                 "ci95_one_sided_low", "ci95_one_sided_high"):
                        agg[f"{key}_{stat}"] = stats.get(stat, math.nan)
                aggregates.append(agg)
    return records, aggregates


def _exp_bias_rows(cfg: dict) -> tuple[list, list]:
    rows = exp_bias_table(cfg["m_grid"], SeededStream(cfg["seed"]),
                          F_target=cfg.get("failure_target", 0.01), alpha=cfg.get("alpha", 0.9),
                          n_outer=cfg.get("n_outer", 100_000),
                          convention=cfg.get("cri_convention", "below"))
    return rows, []


def _variance_balance_rows(cfg: dict) -> tuple[list, list]:
    n_grid = cfg.get("n_grid", [100, 400, 1600])
    table = variance_balance_study(cfg["m_grid"], n_grid, cfg.get("reps", 200),
                                   SeededStream(cfg["seed"]),
                                   R=(cfg.get("reliability_targets") or [0.99])[0])
    rows = [{"m": m, "n": n, "variance_ratio": table[(m, n)]} for m in cfg["m_grid"] for n in n_grid]
    return rows, []


def run_experiment(config_path, *, workers: int = 1, reps: Optional[int] = None,
                   mc_n: Optional[int] = None, seed: Optional[int] = None,
                   out: Optional[str] = None) -> list:
    """Validate the config, run it, and write result files. Returns their paths."""
    cfg = load_config(config_path)
    for key, val in (("reps", reps), ("mc_n", mc_n), ("seed", seed)):
        if val is not None:
            cfg[key] = val
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as err:
        raise ConfigError(f"command line: {err.message}") from None
    study = cfg.get("study", "replicate")
    if study == "replicate":
        records, aggregates = _replicate_rows(cfg, workers)
    elif study == "exp_bias":
        records, aggregates = _exp_bias_rows(cfg)
    else:
        records, aggregates = _variance_balance_rows(cfg)
    output = cfg.get("output", {})
    out_dir = Path(out or output.get("dir", "."))
    fmt = output.get("format", "csv")
    name = cfg.get("name", Path(config_path).stem)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [out_dir / f"{name}_records.{fmt}"]
    _write_table(paths[0], records, fmt)
    if aggregates:
        paths.append(out_dir / f"{name}_aggregate.{fmt}")
        _write_table(paths[1], aggregates, fmt)
    return paths


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="precision-margin",
                                     description="Reliability-based design experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment config")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="path to a YAML config")
    src.add_argument("--preset", choices=PRESETS, help="run a bundled config")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--reps", type=int)
    run.add_argument("--mc-n", type=int, dest="mc_n")
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    sub.add_parser("presets", help="list bundled configs")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "presets":
        for name in PRESETS:
            print(name)
        return 0
    path = args.config or preset_path(args.preset)
    try:
        paths = run_experiment(path, workers=args.workers, reps=args.reps, mc_n=args.mc_n,
                               seed=args.seed, out=args.out)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
