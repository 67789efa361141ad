"""Command-line front end: run a recipe against a problem bundle, check a
recipe against its oracle, or sweep a parameter grid.

Exit codes: 0 ok, 1 usage/config error, 2 non-convergence or partial sweep
failure, 3 equivalence-check failure.
"""
from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from .bundles import BundleError, load_bundle
from .models import ConditionalSoftmaxModel, MixtureModel, SoftmaxModel
from .recipes import (IncompatiblePair, NotFound, check_equivalence,
                      get_recipe, run_recipe)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARTIAL = 2
EXIT_MISMATCH = 3

_RUN_KEYS = {"recipe", "params", "problem", "seed", "out", "overrides", "grid"}


class ConfigError(ValueError):
    pass


def _parse_override(text: str):
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def _set_dotted(obj: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    here = obj
    for p in parts[:-1]:
        here = here.setdefault(p, {})
        if not isinstance(here, dict):
            raise ConfigError(f"override path {dotted!r} crosses a non-object")
    here[parts[-1]] = value


def _load_run_config(path: str, overrides) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    for key, value in overrides or []:
        _set_dotted(cfg, key, value)
    unknown = sorted(set(cfg) - _RUN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if "recipe" not in cfg:
        raise ConfigError("config needs a 'recipe'")
    get_recipe(cfg["recipe"])  # raises NotFound early
    if "params" in cfg and not isinstance(cfg["params"], dict):
        raise ConfigError("'params' must be an object")
    return cfg


def _resolve_seed(cfg: dict, flag_seed: Optional[int]) -> int:
    if flag_seed is not None:
        return int(flag_seed)
    if "seed" in cfg:
        return int(cfg["seed"])
    env = os.environ.get("SEKIT_SEED")
    if env is not None:
        return int(env)
    return 0


def _load_problem(cfg: dict, flag_problem: Optional[str], base: Path):
    spec = flag_problem if flag_problem is not None else cfg.get("problem")
    if spec is None:
        raise ConfigError("no problem bundle given (config 'problem' or --problem)")
    if isinstance(spec, dict):
        return load_bundle(spec)
    path = Path(spec)
    if not path.is_absolute():
        path = base / path
    try:
        with open(path) as fh:
            return load_bundle(json.load(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read problem bundle {path}: {exc}") from exc


def _model_json(model) -> dict:
    if model is None:
        return {"type": "none"}
    if isinstance(model, SoftmaxModel):
        return {"type": "softmax", "theta": model.theta.tolist(),
                "labels": list(model.domain.labels)}
    if isinstance(model, ConditionalSoftmaxModel):
        return {"type": "conditional_softmax", "theta": model.theta.tolist(),
                "labels": list(model.domain.labels),
                "factor_sizes": list(model.domain.factor_sizes)}
    if isinstance(model, MixtureModel):
        return {"type": "mixture",
                "mixture_logits": model.mixture_logits.tolist(),
                "component_logits": model.component_logits.tolist(),
                "labels": list(model.domain.labels),
                "factor_sizes": list(model.domain.factor_sizes)}
    return {"type": type(model).__name__}


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)!r}")


def _write_outputs(out_dir: Path, cfg: dict, seed: int, result) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "trace.csv").write_text(result.trace.to_csv(deterministic=True))
    with open(out_dir / "trace.json", "w") as fh:
        json.dump(result.trace.to_json_obj(deterministic=True), fh, indent=2,
                  default=_json_default, sort_keys=True)
    payload = _model_json(result.model)
    if result.final_dist is not None:
        payload["distribution"] = result.final_dist.p.tolist()
    with open(out_dir / "final_model.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    resolved = dict(cfg)
    resolved["seed"] = seed
    with open(out_dir / "resolved_config.json", "w") as fh:
        json.dump(resolved, fh, indent=2, sort_keys=True)


def _execute_run(cfg: dict, seed: int, bundle, out_dir: Path) -> int:
    params = dict(cfg.get("params", {}))
    result = run_recipe(cfg["recipe"], bundle, seed=seed, **params)
    _write_outputs(out_dir, cfg, seed, result)
    converged = result.trace.converged
    if result.extras and "converged" in result.extras:
        converged = result.extras["converged"]
    if cfg["recipe"] in ("multiplicative-weights", "interpolation-schedule",
                         "policy-gradient", "intrinsic-reward",
                         "rl-as-inference", "unsupervised-mle", "unified-em",
                         "posterior-regularization"):
        # fixed-iteration recipes: finishing the loop is success
        converged = True
    return EXIT_OK if converged else EXIT_PARTIAL


def cmd_run(args) -> int:
    try:
        cfg = _load_run_config(args.config, args.override)
        seed = _resolve_seed(cfg, args.seed)
        base = Path(args.config).resolve().parent
        bundle = _load_problem(cfg, args.problem, base)
        out_dir = Path(args.out if args.out is not None else cfg.get("out", "out"))
        return _execute_run(cfg, seed, bundle, out_dir)
    except (ConfigError, NotFound, BundleError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def cmd_check(args) -> int:
    try:
        recipe = get_recipe(args.recipe)
        oracle = args.oracle if args.oracle is not None else recipe.default_oracle
        base = Path(args.problem).resolve().parent if args.problem else Path.cwd()
        bundle = _load_problem({}, args.problem, base)
        seed = args.seed if args.seed is not None else int(os.environ.get("SEKIT_SEED", 0))
    except (ConfigError, NotFound, BundleError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        report = check_equivalence(args.recipe, oracle, bundle, args.tol,
                                   seed=seed)
    except (IncompatiblePair, BundleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(json.dumps(report, indent=2, sort_keys=True, default=_json_default))
    return EXIT_OK if report["passed"] else EXIT_MISMATCH


def _sweep_cells(grid: dict):
    keys = sorted(grid)
    values = [grid[k] for k in keys]
    for combo in itertools.product(*values):
        yield dict(zip(keys, combo))


def _cell_name(index: int, assignment: dict) -> str:
    parts = [f"{k.replace('.', '_')}={v}" for k, v in sorted(assignment.items())]
    safe = "_".join(parts).replace("/", "-").replace(" ", "")
    return f"cell_{index:03d}_{safe}" if safe else f"cell_{index:03d}"


def _run_cell(index, assignment, cfg, seed, bundle, out_root):
    cell_cfg = json.loads(json.dumps({k: v for k, v in cfg.items() if k != "grid"}))
    for dotted, value in assignment.items():
        _set_dotted(cell_cfg, dotted, value)
    out_dir = out_root / _cell_name(index, assignment)
    try:
        unknown = sorted(set(cell_cfg) - _RUN_KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        get_recipe(cell_cfg["recipe"])
        code = _execute_run(cell_cfg, seed, bundle, out_dir)
        status = "ok" if code == EXIT_OK else "nonconverged"
    except Exception as exc:  # record, do not abort the sweep
        code, status = EXIT_PARTIAL, f"failed: {exc}"
    final = None
    trace_path = out_dir / "trace.csv"
    if trace_path.exists():
        lines = trace_path.read_text().strip().splitlines()
        if len(lines) > 1:
            final = lines[-1].split(",")[4]  # total column
    return index, assignment, status, final


def cmd_sweep(args) -> int:
    try:
        cfg = _load_run_config(args.config, args.override)
        grid = cfg.get("grid")
        if not isinstance(grid, dict) or not grid or any(not v for v in grid.values()):
            raise ConfigError("sweep needs a non-empty 'grid' of value lists")
        seed = _resolve_seed(cfg, args.seed)
        base = Path(args.config).resolve().parent
        bundle = _load_problem(cfg, args.problem, base)
        out_root = Path(args.out if args.out is not None else cfg.get("out", "sweep"))
    except (ConfigError, NotFound, BundleError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out_root.mkdir(parents=True, exist_ok=True)
    cells = list(_sweep_cells(grid))
    jobs = max(1, args.jobs)
    results = []
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_run_cell, i, a, cfg, seed, bundle, out_root)
                   for i, a in enumerate(cells)]
        for fut in futures:
            results.append(fut.result())
    results.sort(key=lambda r: r[0])
    keys = sorted(grid)
    lines = [",".join(["cell"] + keys + ["status", "final_total"])]
    any_failed = False
    for index, assignment, status, final in results:
        if status != "ok":
            any_failed = True
        lines.append(",".join(
            [str(index)] + [str(assignment[k]) for k in keys]
            + [status.replace(",", ";"), "" if final is None else final]))
    (out_root / "summary.csv").write_text("\n".join(lines) + "\n")
    return EXIT_PARTIAL if any_failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sekit",
        description="Composable learning-objective engine on finite domains")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a recipe from a JSON config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--problem", default=None,
                       help="problem bundle JSON (overrides the config)")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--override", action="append", type=_parse_override,
                       default=[], metavar="KEY=VALUE")
    p_run.set_defaults(func=cmd_run)

    p_check = sub.add_parser("check", help="compare a recipe to its oracle")
    p_check.add_argument("--recipe", required=True)
    p_check.add_argument("--oracle", default=None)
    p_check.add_argument("--problem", required=True)
    p_check.add_argument("--tol", type=float, required=True)
    p_check.add_argument("--seed", type=int, default=None)
    p_check.set_defaults(func=cmd_check)

    p_sweep = sub.add_parser("sweep", help="run a config grid cross-product")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--problem", default=None)
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.add_argument("--override", action="append", type=_parse_override,
                         default=[], metavar="KEY=VALUE")
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; our contract reserves 2 for
        # non-convergence, so remap
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
