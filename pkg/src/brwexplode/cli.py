"""Command-line front end.

Every command reads an optional TOML config with ``[offspring]``,
``[weight]`` and ``[run]`` tables, lets flags override ``[run]``, and
writes one output file whose header carries the schema version, the
resolved config and its hash.  Exit codes: 0 certified / all checks
passed, 2 undetermined or a check failed, 1 error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import math
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import collapse, counterexample, criteria, findpath, gwsim, limitlaw
from .distributions import Collapsed, offspring_from_config, stream, weight_from_config

SCHEMA_VERSION = 1
EXIT_OK, EXIT_ERROR, EXIT_UNDETERMINED = 0, 1, 2

RUN_KEYS = {
    "seed", "reps", "depth", "budget", "threads", "eps", "alpha", "generations", "p", "s_grid",
    "width", "depths", "r_grid", "collapse", "offspring_cap", "toy", "periods", "cap", "sizes", "batches",
}

DEFAULTS = {
    "analyze": {},
    "simulate": {"offspring": {"family": "power_tail", "beta": 0.5}, "weight": {"family": "uniform01"},
                 "run": {"seed": 0, "reps": 100, "depth": 10, "budget": 10**6, "threads": 1}},
    "findpath": {"offspring": {"family": "power_tail", "beta": 0.5}, "weight": {"family": "uniform01"},
                 "run": {"seed": 0, "reps": 100, "generations": 12, "eps": 1.0, "alpha": "auto", "threads": 1}},
    "collapse": {"offspring": {"family": "deterministic", "k": 2}, "weight": None,
                 "run": {"seed": 0, "reps": 10**5, "p": 0.5, "cap": 2e4, "threads": 1,
                         "s_grid": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]}},
    "counterexample": {"run": {"toy": True, "periods": 4}},
    "limit": {"offspring": {"family": "power_tail", "beta": 0.5}, "weight": {"family": "double_exp_small"},
              "run": {"seed": 0, "reps": 200, "eps": 1.0, "depths": [4, 6, 8, 10], "budget": 10**5,
                      "width": 4096, "threads": 1}},
}


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------


@dataclasses.dataclass
class RunConfig:
    command: str
    offspring: dict | None
    weight: dict | None
    run: dict

    def to_dict(self) -> dict:
        # thread count is an execution detail; results do not depend on it
        run = {k: v for k, v in self.run.items() if k != "threads"}
        return {"command": self.command, "offspring": self.offspring, "weight": self.weight, "run": run}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - {"command", "offspring", "weight", "run"}
        if unknown:
            raise UsageError(f"unknown config sections: {sorted(unknown)}")
        return cls(d["command"], d.get("offspring"), d.get("weight"), dict(d.get("run") or {}))

    def hash(self) -> str:
        return hashlib.sha256(_canonical(self.to_dict()).encode()).hexdigest()


def _canonical(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, separators=(",", ":"))


def _clean(obj):
    """JSON-safe copy: non-finite floats become None or 'Infinite'; numpy scalars become Python."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "Infinite" if x > 0 else "-Infinite"
        return x
    if isinstance(obj, np.bool_):
        return bool(obj)
    if dataclasses.is_dataclass(obj):
        return _clean(obj.to_dict() if hasattr(obj, "to_dict") else dataclasses.asdict(obj))
    if isinstance(obj, (str, int, bool)) or obj is None:
        return obj
    return str(obj)


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    unknown = set(data) - {"offspring", "weight", "run"}
    if unknown:
        raise UsageError(f"unknown config sections: {sorted(unknown)}")
    bad = set(data.get("run", {})) - RUN_KEYS
    if bad:
        raise UsageError(f"unknown [run] keys: {sorted(bad)}")
    return data


def resolve(command: str, args: argparse.Namespace) -> RunConfig:
    base = DEFAULTS[command]
    file_cfg = load_config(args.config)
    offspring = file_cfg.get("offspring", base.get("offspring"))
    weight = file_cfg.get("weight", base.get("weight"))
    run = dict(base.get("run", {}))
    run.update(file_cfg.get("run", {}))
    for key in ("seed", "reps", "depth", "budget", "threads"):
        v = getattr(args, key, None)
        if v is not None:
            run[key] = v
    for key, v in vars(args).items():
        if key in RUN_KEYS and key not in ("seed", "reps", "depth", "budget", "threads") and v is not None:
            run[key] = v
    return RunConfig(command, offspring, weight, run)


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _header(cfg: RunConfig) -> dict:
    return {"schema_version": SCHEMA_VERSION, "config_hash": cfg.hash(), "config": _clean(cfg.to_dict())}


def write_json(cfg: RunConfig, result, out_dir: Path, name: str) -> Path:
    doc = _header(cfg)
    doc["result"] = _clean(result)
    path = out_dir / f"{name}.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def write_csv(cfg: RunConfig, rows: list, out_dir: Path, name: str) -> Path:
    buf = io.StringIO()
    h = _header(cfg)
    buf.write(f"# schema_version={h['schema_version']}\n")
    buf.write(f"# config_hash={h['config_hash']}\n")
    buf.write(f"# config={_canonical(cfg.to_dict())}\n")
    rows = [_clean(r) for r in rows]
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: "" if v is None else v for k, v in r.items()})
    path = out_dir / f"{name}.csv"
    path.write_text(buf.getvalue())
    return path


def _emit(cfg: RunConfig, args, result, rows: list | None, name: str) -> Path:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.format == "csv" and rows is not None:
        return write_csv(cfg, rows, out_dir, name)
    return write_json(cfg, result, out_dir, name)


def _sim_config(run: dict, depth_key: str = "depth") -> gwsim.SimConfig:
    return gwsim.SimConfig(
        seed=int(run.get("seed", 0)), depth=int(run.get(depth_key, 10)), reps=int(run.get("reps", 100)),
        node_budget=int(run.get("budget", 10**6)), offspring_cap=int(run.get("offspring_cap", 10**6)),
        threads=int(run.get("threads", 1)))


def _need(cfg: RunConfig, section: str) -> dict:
    d = getattr(cfg, section)
    if not d:
        raise UsageError(f"config needs an [{section}] table")
    return d


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_analyze(cfg: RunConfig, args) -> int:
    Z = offspring_from_config(_need(cfg, "offspring"))
    W = weight_from_config(_need(cfg, "weight"))
    result: dict = {}
    if W.atom_at_zero > 0:
        if not cfg.run.get("collapse"):
            raise UsageError("weight has an atom at zero; rerun with --collapse to analyse the collapsed tree")
        case = collapse.classify_case(Z, W)
        result["case"] = case.to_dict()
        Z, W = Collapsed(Z, W.atom_at_zero), collapse.collapsed_weight(W)
    rep = criteria.minsum_criterion(Z, W)
    result["minsum"] = rep.to_dict()
    path = _emit(cfg, args, result, None, "analyze")
    print(f"verdict: {rep.verdict}")
    print(f"certificate: {rep.certificate}")
    if math.isfinite(rep.partial_sum):
        print(f"partial sum: {rep.partial_sum!r}")
    print(f"wrote {path}")
    return EXIT_OK if rep.certified else EXIT_UNDETERMINED


def cmd_simulate(cfg: RunConfig, args) -> int:
    Z = offspring_from_config(_need(cfg, "offspring"))
    sc = _sim_config(cfg.run)
    if cfg.run.get("sizes"):
        out = gwsim.grow_generations(Z, sc)
    else:
        out = gwsim.min_displacement(Z, weight_from_config(_need(cfg, "weight")), sc)
    result = {"summary": out.summary(), "per_rep": out.rows()}
    path = _emit(cfg, args, result, out.rows(), "simulate")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_findpath(cfg: RunConfig, args) -> int:
    Z = offspring_from_config(_need(cfg, "offspring"))
    W = weight_from_config(_need(cfg, "weight"))
    eps = float(cfg.run.get("eps", 1.0))
    alpha = cfg.run.get("alpha", "auto")
    alpha = findpath.alpha_default(eps) if alpha in (None, "auto") else float(alpha)
    cfg.run["alpha"] = alpha  # resolved value is what gets recorded
    gens = int(cfg.run.get("generations", 12))
    records = findpath.findpath_runs(Z, W, alpha, gens, _sim_config(cfg.run))
    rows = [{"rep": i, **dataclasses.asdict(row), "failed_at_level": rec.failed_at_level}
            for i, rec in enumerate(records) for row in rec.per_level]
    result = {"alpha": alpha, "tie_rule": "stable_draw_order", "records": [r.to_dict() for r in records]}
    path = _emit(cfg, args, result, rows, "findpath")
    print(f"alpha = {alpha!r}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_collapse(cfg: RunConfig, args) -> int:
    Z = offspring_from_config(_need(cfg, "offspring"))
    p = float(cfg.run.get("p", 0.5))
    rows = collapse.verify_functional_equation(
        Z, p, cfg.run["s_grid"], int(cfg.run.get("reps", 10**5)), seed=int(cfg.run.get("seed", 0)),
        cap=float(cfg.run.get("cap", 2e4)), batches=int(cfg.run.get("batches", 1000)),
        threads=int(cfg.run.get("threads", 1)))
    table = [{**dataclasses.asdict(r), "within_3se": r.within} for r in rows]
    result: dict = {"residuals": table}
    if cfg.weight:
        result["case"] = collapse.classify_case(Z, weight_from_config(cfg.weight)).to_dict()
    _, S, tr = collapse.sample_zeta_batch(Z, p, stream(int(cfg.run.get("seed", 0)), "zeta/tail", 0),
                                          int(cfg.run.get("reps", 10**5)), float(cfg.run.get("cap", 2e4)))
    result["tail_slope"] = collapse.tail_slope(S)
    result["truncated_fraction"] = float(tr.mean())
    path = _emit(cfg, args, result, table, "collapse")
    for r in rows:
        print(f"s={r.s:.2f} residual={r.residual:+.2e} se={r.se:.2e} {'ok' if r.within else 'OUTSIDE 3 SE'}")
    print(f"tail slope of cluster size: {result['tail_slope']:.3f}")
    print(f"wrote {path}")
    return EXIT_OK if all(r.within for r in rows) else EXIT_UNDETERMINED


def cmd_counterexample(cfg: RunConfig, args) -> int:
    periods = int(cfg.run.get("periods", 4))
    seq = counterexample.toy_n_seq(periods) if cfg.run.get("toy", True) else counterexample.large_n_seq(periods)
    spec = counterexample.build_counterexample(seq)
    lines = counterexample.counterexample_audit(spec)
    result = {"spec": spec.to_dict(), "audit": [dataclasses.asdict(ln) for ln in lines]}
    path = _emit(cfg, args, result, None, "counterexample")
    for ln in lines:
        print(ln)
    print(f"wrote {path}")
    return EXIT_OK if all(ln.passed for ln in lines) else EXIT_UNDETERMINED


def cmd_limit(cfg: RunConfig, args) -> int:
    Z = offspring_from_config(_need(cfg, "offspring"))
    W = weight_from_config(_need(cfg, "weight"))
    depths = [int(d) for d in cfg.run.get("depths", [4, 6, 8, 10])]
    eps = float(cfg.run.get("eps", 1.0))
    sc = _sim_config({**cfg.run, "depth": max(depths)})
    study = limitlaw.mn_ratio_study(Z, W, eps, depths, sc, width=int(cfg.run.get("width", 4096)))
    path = _emit(cfg, args, study.to_dict(), study.csv_rows(), "limit")
    for row in study.csv_rows():
        print(f"depth {row['depth']:>3}: ratio in [{row['median_ratio_lower']:.3f}, {row['median_ratio_upper']:.3f}]"
              f" normalization {row['normalization']:.4f}")
    lo, hi = study.slope_range
    print(f"interval check: {study.interval_verdict}; trend check: {study.trend_verdict}"
          f" (slope of median ratio in [{lo:.4f}, {hi:.4f}])")
    for note in study.notes:
        print(f"note: {note}")
    print(f"wrote {path}")
    ok = study.interval_verdict == limitlaw.PASS and study.trend_verdict == limitlaw.PASS
    return EXIT_OK if ok else EXIT_UNDETERMINED


COMMANDS = {
    "analyze": cmd_analyze, "simulate": cmd_simulate, "findpath": cmd_findpath,
    "collapse": cmd_collapse, "counterexample": cmd_counterexample, "limit": cmd_limit,
}


def _float_list(s: str) -> list:
    return [float(x) for x in s.split(",") if x]


def _int_list(s: str) -> list:
    return [int(x) for x in s.split(",") if x]


def _alpha(s: str):
    return s if s == "auto" else float(s)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file with [offspring], [weight] and [run] tables")
    common.add_argument("--seed", type=int)
    common.add_argument("--reps", type=int)
    common.add_argument("--depth", type=int)
    common.add_argument("--budget", type=int, help="node budget of the best-first search")
    common.add_argument("--threads", type=int)
    common.add_argument("--out-dir", default=".")
    common.add_argument("--format", choices=("csv", "json"), default="json")

    parser = argparse.ArgumentParser(prog="brwexplode", description="Explosion of weighted branching trees.")
    sub = parser.add_subparsers(dest="command", required=True)
    a = sub.add_parser("analyze", parents=[common], help="decide explosion from the distributions")
    a.add_argument("--collapse", action="store_const", const=True, default=None,
                   help="contract zero-weight clusters before analysing")
    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo minimal displacements")
    s.add_argument("--sizes", action="store_const", const=True, default=None, help="generation sizes only")
    f = sub.add_parser("findpath", parents=[common], help="greedy option-restricted descent")
    f.add_argument("--generations", type=int)
    f.add_argument("--alpha", type=_alpha, help="exponent or 'auto' for (1+eps)^-1/2")
    f.add_argument("--eps", type=float)
    c = sub.add_parser("collapse", parents=[common], help="collapsed offspring law and its fixed point")
    c.add_argument("--p", type=float, help="mass of the zero atom")
    c.add_argument("--s-grid", dest="s_grid", type=_float_list)
    c.add_argument("--cap", type=float)
    x = sub.add_parser("counterexample", parents=[common], help="build and audit the speed counterexample")
    g = x.add_mutually_exclusive_group()
    g.add_argument("--toy", dest="toy", action="store_const", const=True, default=None)
    g.add_argument("--large", dest="toy", action="store_const", const=False, help="doubly exponential periods")
    x.add_argument("--periods", type=int)
    li = sub.add_parser("limit", parents=[common], help="M_n against its normalizing sum")
    li.add_argument("--eps", type=float)
    li.add_argument("--depths", type=_int_list)
    li.add_argument("--width", type=int, help="beam width for upper bounds")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args.command, args)
        return COMMANDS[args.command](cfg, args)
    except Exception as exc:  # surfaced as machine-readable JSON
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        print(json.dumps(err), file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
