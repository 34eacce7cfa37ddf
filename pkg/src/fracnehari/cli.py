"""Batch front end: ``solve <config-path> [--mode M] [--out DIR] [--seed N] [--restarts N]``.

The config is a flat ``key = value`` file with ``#`` comments; dotted keys group
settings (``grid.n_nodes``, ``sweep.count``, ...).
"""

import argparse
import configparser
import csv
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import DiscreteFunction, build_grid, x0_norm
from .errors import (
    ConfigIOError,
    InvariantViolationError,
    NehariError,
    ParseError,
    ValidationError,
    exit_code_for,
)
from .expr import compile_expression
from .functional import ProblemParams, Regime, truncation_interval, validate_params
from .oracle import brute_force_oracle
from .solver import SolverOptions, solve
from .thresholds import compute_thresholds

MODES = ("thresholds", "solve", "sweep", "oracle")
FORMATS = ("csv", "json")
SWEEP_COLUMNS = ["lambda", "theta_plus", "theta_minus", "norm_plus", "norm_minus",
                 "residual_plus", "residual_minus", "flags"]
SWEEP_KEYS = ("sweep.lambda_min", "sweep.lambda_max", "sweep.count", "sweep.log_spacing")

DEFAULTS = {
    "a": "1", "b": "1", "p": "2", "q": "1.5", "r": "5", "s": "0.4", "lambda": "1",
    "f": "1", "g": "1",
    "grid.left": "-1", "grid.right": "1", "grid.n_nodes": "31",
    "mode": "thresholds",
    "output.dir": "out", "output.format": "csv",
    "seed": "42", "restarts": "16", "c_star": "1",
}
OPTIONAL_KEYS = ("m0", "trunc.k") + SWEEP_KEYS
KNOWN_KEYS = set(DEFAULTS) | set(OPTIONAL_KEYS)


@dataclass
class SweepConfig:
    lambda_min: float
    lambda_max: float
    count: int
    log_spacing: bool = False

    def values(self):
        if self.count == 1:
            return [self.lambda_min]
        if self.log_spacing:
            return list(np.geomspace(self.lambda_min, self.lambda_max, self.count))
        return list(np.linspace(self.lambda_min, self.lambda_max, self.count))


@dataclass
class ExperimentConfig:
    params: ProblemParams
    left: float
    right: float
    n_nodes: int
    mode: str
    output_dir: Path
    output_format: str
    seed: int
    restarts: int
    sweep: SweepConfig | None = None
    trunc_k: float | None = None
    workers: int = 1
    raw: dict = field(default_factory=dict)

    @property
    def regime(self):
        return self.params.regime

    def grid(self):
        return build_grid(self.left, self.right, self.n_nodes, self.params.s, self.params.p)

    def solver_options(self):
        return SolverOptions(restarts=self.restarts, seed=self.seed, k=self.trunc_k,
                             workers=self.workers)


def _read_pairs(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigIOError(f"cannot read config {path}: {exc}") from exc
    cp = configparser.ConfigParser(
        delimiters=("=",), comment_prefixes=("#",), inline_comment_prefixes=("#",),
        interpolation=None, strict=True,
    )
    cp.optionxform = str
    try:
        cp.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ValidationError(f"config: malformed document ({exc.message.strip()})") from exc
    return dict(cp["config"])


def _number(raw, key, errors, kind=float):
    try:
        value = kind(raw[key])
    except (TypeError, ValueError):
        errors.append(f"{key}: expected {'an integer' if kind is int else 'a number'}, got {raw[key]!r}")
        return None
    if kind is float and not math.isfinite(value):
        errors.append(f"{key}: must be finite")
        return None
    return value


def _flag(raw, key, errors):
    v = raw[key].strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    errors.append(f"{key}: expected a boolean, got {raw[key]!r}")
    return None


def load_config(path, overrides=None):
    """Read and validate a config file; every violation is reported at once.

    ``overrides`` maps config keys to values that replace the file's entries.
    """
    pairs = _read_pairs(path)
    errors = [f"{k}: unknown key" for k in pairs if k not in KNOWN_KEYS]
    raw = dict(DEFAULTS)
    raw.update(pairs)
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = str(v)

    num = {k: _number(raw, k, errors) for k in ("a", "b", "p", "q", "r", "s", "lambda",
                                                 "grid.left", "grid.right", "c_star")}
    n_nodes = _number(raw, "grid.n_nodes", errors, int)
    seed = _number(raw, "seed", errors, int)
    restarts = _number(raw, "restarts", errors, int)
    m0 = _number(raw, "m0", errors) if "m0" in raw else None
    trunc_k = _number(raw, "trunc.k", errors) if "trunc.k" in raw else None

    for key in ("f", "g"):
        try:
            compile_expression(raw[key])
        except ParseError as exc:
            errors.append(f"{key}: {exc}")
    if None not in (num["a"], num["b"], num["p"], num["q"], num["r"], num["s"], num["lambda"],
                    num["c_star"]):
        errors.extend(validate_params(num["a"], num["b"], num["p"], num["q"], num["r"], num["s"],
                                      num["lambda"], num["c_star"], m0))
    if num["grid.left"] is not None and num["grid.right"] is not None:
        if not num["grid.left"] < num["grid.right"]:
            errors.append("grid.left: requires grid.left < grid.right")
    if n_nodes is not None and n_nodes < 1:
        errors.append("grid.n_nodes: requires n_nodes >= 1")
    if restarts is not None and restarts < 1:
        errors.append("restarts: requires restarts >= 1")

    mode = raw["mode"].strip()
    if mode not in MODES:
        errors.append(f"mode: must be one of {', '.join(MODES)} (got {mode!r})")
    fmt = raw["output.format"].strip()
    if fmt not in FORMATS:
        errors.append(f"output.format: must be csv or json (got {fmt!r})")

    sweep = None
    present = [k for k in SWEEP_KEYS if k in raw]
    if mode == "sweep":
        for k in SWEEP_KEYS[:3]:
            if k not in raw:
                errors.append(f"{k}: required when mode = sweep")
        if all(k in raw for k in SWEEP_KEYS[:3]):
            lo = _number(raw, "sweep.lambda_min", errors)
            hi = _number(raw, "sweep.lambda_max", errors)
            cnt = _number(raw, "sweep.count", errors, int)
            logsp = _flag(raw, "sweep.log_spacing", errors) if "sweep.log_spacing" in raw else False
            if lo is not None and hi is not None:
                if not 0 < lo <= hi:
                    errors.append("sweep.lambda_min: requires 0 < lambda_min <= lambda_max")
            if cnt is not None and cnt < 1:
                errors.append("sweep.count: requires count >= 1")
            if not errors:
                sweep = SweepConfig(lo, hi, cnt, bool(logsp))
    else:
        for k in present:
            errors.append(f"{k}: only allowed when mode = sweep")

    params = None
    if not errors:
        params = ProblemParams(
            a=num["a"], b=num["b"], p=num["p"], q=num["q"], r=num["r"], s=num["s"],
            lam=num["lambda"], f=raw["f"], g=raw["g"], C_star=num["c_star"], m0=m0,
        )
        if trunc_k is not None:
            if params.regime is not Regime.R_LT_2P:
                errors.append("trunc.k: only valid when p < r < 2p")
            else:
                lo, hi = truncation_interval(params)
                if not lo < trunc_k < hi:
                    errors.append(f"trunc.k: requires {lo!r} < k < {hi!r}")
    if errors:
        raise ValidationError(errors)
    return ExperimentConfig(
        params=params, left=num["grid.left"], right=num["grid.right"], n_nodes=n_nodes,
        mode=mode, output_dir=Path(raw["output.dir"]), output_format=fmt, seed=seed,
        restarts=restarts, sweep=sweep, trunc_k=trunc_k, raw=raw,
    )


# --- writers ------------------------------------------------------------------

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return ";".join(str(x) for x in v)
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def _write_table(path, header, rows, fmt):
    if fmt == "json":
        data = [dict(zip(header, (_jsonable(x) for x in row))) for row in rows]
        path.with_suffix(".json").write_text(json.dumps(data, indent=2) + "\n")
        return path.with_suffix(".json")
    with open(path.with_suffix(".csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path.with_suffix(".csv")


def _write_kv(path, mapping, fmt):
    return _write_table(path, ["key", "value"], list(mapping.items()), fmt)


def _write_profile(path, point):
    x, u = point.u.profile()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "u"])
        for xi, ui in zip(x, u):
            w.writerow([repr(float(xi)), repr(float(ui))])


def _point_summary(pt):
    if pt is None:
        return {}
    return {
        "energy": pt.energy,
        "norm": x0_norm(pt.u),
        "norm_p": pt.norm_p,
        "weak_residual": pt.weak_residual,
        "fiber_residual": pt.relative_fiber_residual,
        "second_deriv": pt.second_deriv,
        "converged": pt.converged,
        "iterations": pt.iterations,
        "restart_index": pt.restart_index,
    }


def report_dict(report):
    out = {
        "regime": report.regime.value,
        "lambda": report.lam,
        "theta_plus": report.theta_plus,
        "theta_minus": report.theta_minus,
        "distinctness": report.distinctness,
        "seed": report.seed,
        "restarts": report.restarts,
        "flags": list(report.flags),
    }
    for name, pt in (("plus", report.plus_solution), ("minus", report.minus_solution)):
        for k, v in _point_summary(pt).items():
            out[f"{name}.{k}"] = v
    if report.truncation_verdict:
        for k, v in report.truncation_verdict.items():
            if isinstance(v, dict):
                for kk, vv in v.items():
                    out[f"trunc.{k}.{kk}"] = vv
            else:
                out[f"trunc.{k}"] = v
    if report.critical_diagnostic:
        for k, v in report.critical_diagnostic.items():
            out[f"critical.{k}"] = v
    return out


def _check_points(report):
    for pt in report.solutions():
        pt.check()


# --- modes --------------------------------------------------------------------

def _thresholds_table(cfg, grid, params=None):
    opts = cfg.solver_options()
    return compute_thresholds(grid, params or cfg.params, k=cfg.trunc_k,
                              restarts=opts.restarts, seed=opts.seed)


def _run_thresholds(cfg, grid, manifest):
    table = _thresholds_table(cfg, grid).check()
    manifest["thresholds"] = table.as_dict()
    manifest["flags"].extend(table.flags)
    d = table.as_dict()
    d["flags"] = ";".join(d["flags"])
    return [_write_kv(cfg.output_dir / "thresholds", d, cfg.output_format)]


def _run_solve(cfg, grid, manifest):
    table = _thresholds_table(cfg, grid)
    report = solve(cfg.params, grid, cfg.solver_options(), table=table)
    manifest["thresholds"] = table.as_dict()
    manifest["flags"].extend(f for f in report.flags if f not in manifest["flags"])
    _check_points(report)
    files = [_write_kv(cfg.output_dir / "solve_report", report_dict(report), cfg.output_format)]
    for name, pt in (("plus", report.plus_solution), ("minus", report.minus_solution)):
        if pt is not None:
            path = cfg.output_dir / f"profile_{name}.csv"
            _write_profile(path, pt)
            files.append(path)
    return files


def _sweep_point(args):
    params, grid, options, overrides, k = args
    table = compute_thresholds(grid, params, k=k, overrides=overrides,
                               restarts=options.restarts, seed=options.seed)
    report = solve(params, grid, options, table=table)
    _check_points(report)
    return report


def _run_sweep(cfg, grid, manifest):
    base = _thresholds_table(cfg, grid)
    manifest["thresholds"] = base.as_dict()
    overrides = {"S_r": base.S_r}
    if base.capital_lambda is not None:
        overrides["capital_lambda"] = base.capital_lambda
    options = cfg.solver_options()
    inner = SolverOptions(restarts=options.restarts, seed=options.seed, k=options.k)
    jobs = [(cfg.params.with_lambda(float(lam)), grid, inner, overrides, cfg.trunc_k)
            for lam in cfg.sweep.values()]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            reports = list(ex.map(_sweep_point, jobs))
    else:
        reports = [_sweep_point(j) for j in jobs]
    rows = []
    for rep in reports:
        p, m = rep.plus_solution, rep.minus_solution
        rows.append([
            rep.lam, rep.theta_plus, rep.theta_minus,
            None if p is None else x0_norm(p.u), None if m is None else x0_norm(m.u),
            None if p is None else p.weak_residual, None if m is None else m.weak_residual,
            ";".join(rep.flags),
        ])
        for f in rep.flags:
            if f not in manifest["flags"]:
                manifest["flags"].append(f)
    return [_write_table(cfg.output_dir / "sweep", SWEEP_COLUMNS, rows, cfg.output_format)]


def _run_oracle(cfg, grid, manifest):
    table = _thresholds_table(cfg, grid)
    manifest["thresholds"] = table.as_dict()
    report = solve(cfg.params, grid, cfg.solver_options(), table=table)
    _check_points(report)
    oracle = brute_force_oracle(cfg.params, grid)
    rows = []
    for name, solver_theta, oracle_theta in (("plus", report.theta_plus, oracle[0]),
                                             ("minus", report.theta_minus, oracle[1])):
        diff = None
        if solver_theta is not None and math.isfinite(oracle_theta):
            diff = abs(solver_theta - oracle_theta)
        rows.append([name, solver_theta, oracle_theta, diff])
    manifest["flags"].extend(f for f in report.flags if f not in manifest["flags"])
    return [_write_table(cfg.output_dir / "oracle", ["branch", "solver_theta", "oracle_theta",
                                                     "abs_diff"], rows, cfg.output_format)]


RUNNERS = {"thresholds": _run_thresholds, "solve": _run_solve, "sweep": _run_sweep,
           "oracle": _run_oracle}


def run(cfg):
    """Execute one configured experiment; returns the process exit status."""
    start = time.perf_counter()
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config": dict(sorted(cfg.raw.items())),
        "mode": cfg.mode,
        "regime": cfg.regime.value,
        "flags": [],
        "files": [],
    }
    if cfg.params.m0_defaulted and cfg.regime is Regime.CRITICAL:
        manifest["flags"].append("M0_DEFAULTED")
    status = 0
    try:
        grid = cfg.grid()
        files = RUNNERS[cfg.mode](cfg, grid, manifest)
        manifest["files"] = [Path(f).name for f in files]
        manifest["status"] = "ok"
    except NehariError as exc:
        status = exit_code_for(exc)
        manifest["status"] = "error"
        manifest["error"] = {"code": exc.code, "message": str(exc)}
        manifest["flags"].append("PARTIAL_OUTPUT")
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
    manifest["wall_time_s"] = time.perf_counter() - start
    (cfg.output_dir / "run.json").write_text(json.dumps(_jsonable(manifest), indent=2) + "\n")
    return status


def build_parser():
    ap = argparse.ArgumentParser(prog="solve", description=__doc__.splitlines()[0])
    ap.add_argument("config", help="path to the key = value experiment file")
    ap.add_argument("--mode", choices=MODES)
    ap.add_argument("--out", help="output directory (overrides output.dir)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--restarts", type=int)
    ap.add_argument("--workers", type=int, default=1, help="parallel sweep points / restarts")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {"mode": args.mode, "output.dir": args.out, "seed": args.seed,
                 "restarts": args.restarts}
    try:
        cfg = load_config(args.config, overrides)
    except NehariError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    cfg.workers = max(1, args.workers)
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
