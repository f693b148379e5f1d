"""Command-line entry point: ``bandit-ot {run,sweep,verify,baseline}``."""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .bounds import bound_for_run
from .export import export, metadata
from .runner import ConfigError, ExperimentConfig, run_experiment
from .verify import run_checks

log = logging.getLogger("bandit_ot")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3
FORMATS = ("csv", "json", "svg")


def _parse_formats(text):
    fmts = [f.strip() for f in text.split(",") if f.strip()]
    bad = [f for f in fmts if f not in FORMATS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown format(s) {bad}; choose from {FORMATS}")
    return fmts


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bandit-ot", description="Optimistic bandits over transport plans.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, need_config=True):
        sp.add_argument("--config", type=Path, required=need_config, help="experiment JSON")
        sp.add_argument("--seed", type=int, help="master seed (overrides config)")
        sp.add_argument("--reps", type=int, help="repetitions M (overrides config)")

    run = sub.add_parser("run", help="run one configuration")
    common(run)
    run.add_argument("--out", type=Path, default=Path("results"))
    run.add_argument("--format", type=_parse_formats, default=list(FORMATS), help="comma list of csv,json,svg")

    sweep = sub.add_parser("sweep", help="vary one parameter over a list of values")
    common(sweep)
    sweep.add_argument("--out", type=Path, default=Path("results"))
    sweep.add_argument("--param", required=True, help="dotted key, e.g. agent.lam or env.sigma")
    sweep.add_argument("--values", required=True, help="comma-separated values")
    sweep.add_argument("--format", type=_parse_formats, default=list(FORMATS))

    ver = sub.add_parser("verify", help="run the invariant checks")
    ver.add_argument("--seed", type=int, default=0)

    base = sub.add_parser("baseline", help="print Kantorovich and entropic values for an environment")
    base.add_argument("--config", type=Path, required=True)
    base.add_argument("--values", default="", help="comma-separated epsilons")
    return p


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "reps", None) is not None:
        if args.reps < 1:
            raise ConfigError("--reps must be at least 1")
        cfg.M = args.reps
    return cfg


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _set_param(cfg: ExperimentConfig, dotted: str, value) -> ExperimentConfig:
    d = copy.deepcopy(cfg.to_dict())
    keys = dotted.split(".")
    node = d
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            node[k] = {}
        node = node[k]
    node[keys[-1]] = value
    return ExperimentConfig.from_dict(d)


def _run_and_write(cfg: ExperimentConfig, out: Path, formats) -> dict:
    env = cfg.build_env()
    agent_cfg = cfg.agent_config(env)
    records = run_experiment(cfg)
    column = "cum_ent" if agent_cfg.eps.kind == "fixed" else "cum_kant_lo"
    bound = bound_for_run(records[0], env, agent_cfg) if records and records[0].T else None
    meta = metadata(cfg, {"env_hash": env.hash(), "seeds": [r.summary["spawn_key"] for r in records],
                          "bound": None if bound is None else bound.to_dict()})
    out.mkdir(parents=True, exist_ok=True)
    for fmt in formats:
        for path in export(records, fmt, out / f"run.{fmt}", meta=meta, bound=bound, column=column):
            log.info("wrote %s", path)
    finals = [r.final(column) for r in records]
    failed = [r.summary["rep"] for r in records if not r.summary["completed"]]
    return {"column": column, "median_final": float(np.median(finals)) if finals else None,
            "failed_reps": failed, "env_hash": env.hash(), "config_hash": cfg.hash()}


def cmd_run(args) -> int:
    cfg = _load(args)
    summary = _run_and_write(cfg, args.out, args.format)
    print(json.dumps(summary))
    return EXIT_RUNTIME if summary["failed_reps"] else EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    values = [_parse_value(v.strip()) for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("--values is empty")
    rows = []
    for v in values:
        sub = _set_param(cfg, args.param, v)
        s = _run_and_write(sub, args.out / f"{args.param}={v}", args.format)
        rows.append({"param": args.param, "value": v, **s})
        print(json.dumps(rows[-1]))
    with open(args.out / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["param", "value", "column", "median_final", "failed_reps", "env_hash", "config_hash"])
        w.writeheader()
        w.writerows(rows)
    return EXIT_RUNTIME if any(r["failed_reps"] for r in rows) else EXIT_OK


def cmd_verify(args) -> int:
    results = run_checks(args.seed)
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.name}: {r.detail}")
    return EXIT_OK if all(r.ok for r in results) else EXIT_VERIFY


def cmd_baseline(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    env = cfg.build_env()
    kb = env.kantorovich()
    out = {"env_hash": env.hash(), "kantorovich": {"value": kb.value, "lower": kb.lower, "upper": kb.upper,
                                                   "method": kb.method}, "entropic": {}}
    for e in [float(x) for x in args.values.split(",") if x.strip()]:
        if not e > 0:
            raise ConfigError("epsilon values must be positive")
        ev = env.entropic(e)
        out["entropic"][repr(e)] = {"value": ev.value, "lower": ev.lower, "gap": ev.gap}
    print(json.dumps(out, indent=2))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "verify": cmd_verify, "baseline": cmd_baseline}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
