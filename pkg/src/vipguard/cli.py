"""Command line entry point: ``vipguard train|eval|sweep|report``.

Successful commands print one JSON object on stdout. Failures print one JSON
object with an ``error`` key on stderr and exit with status 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import WorldConfig, load_config
from .errors import ConfigError, VipGuardError
from .harness import (ExperimentSpec, emit_report, evaluate, read_records, run_sweep, run_training,
                      threat_stats, write_records)
from .learner import load_learners

EXIT_FAILURE = 2


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _emit(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True))


def cmd_train(args) -> dict:
    cfg = load_config(args.config) if args.config else WorldConfig()
    cfg = cfg.with_overrides(args.override or [])
    out = Path(args.out) if args.out else Path("runs") / f"{cfg.digest()}_seed{cfg.seed}"
    result = run_training(cfg, out_dir=out)
    mean, std = threat_stats(result.evals())
    return {"command": "train", "out": str(out), "episodes": cfg.train_episodes, "seed": cfg.seed,
            "baseline_total_threat": result.baseline, "final_total_threat": mean,
            "final_total_threat_std": std}


def cmd_eval(args) -> dict:
    if args.episodes < 1:
        raise ConfigError("episodes", "must be >= 1")
    learners, manifest = load_learners(args.checkpoint)
    cfg = WorldConfig.from_dict(manifest["config"])
    seed = manifest["seed"] if args.seed is None else args.seed
    records = evaluate(learners, cfg, args.episodes, seed, manifest.get("episodes", 0))
    if args.out:
        write_records(args.out, records)
    mean, std = threat_stats(records)
    return {"command": "eval", "checkpoint": str(args.checkpoint), "episodes": args.episodes, "seed": seed,
            "mean_total_threat": mean, "std_total_threat": std}


def cmd_sweep(args) -> dict:
    spec = ExperimentSpec.load(args.spec)
    if args.out:
        spec.output_dir = Path(args.out)
    records = run_sweep(spec, jobs=args.jobs)
    return {"command": "sweep", "points": len(spec.points()), "records": len(records),
            "report": str(spec.output_dir / "report")}


def cmd_report(args) -> dict:
    src = Path(args.inp)
    files = [src] if src.is_file() else sorted(p for p in src.rglob("records.csv")
                                               if Path(args.out).resolve() not in p.resolve().parents)
    if not files:
        raise FileNotFoundError(f"no records.csv under {src}")
    records = [r for f in files for r in read_records(f)]
    paths = emit_report(records, args.out)
    return {"command": "report", "inputs": len(files), "records": len(records),
            "files": {k: str(v) for k, v in sorted(paths.items())}}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vipguard", description="VIP protection with learned bodyguard teams")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    t = sub.add_parser("train", help="train one configuration on one seed")
    t.add_argument("--config", help="JSON config file (defaults when omitted)")
    t.add_argument("--override", action="append", metavar="KEY=VALUE", help="override a config field")
    t.add_argument("--out", help="run directory (default runs/<config hash>_seed<seed>)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--episodes", type=int, required=True)
    e.add_argument("--seed", type=int, help="evaluation seed (default: the run seed)")
    e.add_argument("--out", help="write per-episode records to this CSV")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="train every axis combination and seed of an experiment spec")
    s.add_argument("--spec", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", help="override the spec's output directory")
    s.set_defaults(func=cmd_sweep)

    r = sub.add_parser("report", help="summary tables from records.csv files")
    r.add_argument("--in", dest="inp", required=True, help="records.csv or a directory searched recursively")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
        _emit(args.func(args))
        return 0
    except (CliError, VipGuardError, OSError, ValueError, KeyError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, ConfigError):
            err["field"] = exc.field
        if getattr(exc, "episode", None) is not None:
            err["episode"] = exc.episode
        print(json.dumps(err, sort_keys=True), file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
