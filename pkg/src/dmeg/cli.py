"""Command-line entry points: run, sweep, report.

Exit codes: 0 success, 2 configuration error, 3 numeric abort.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

from .runner import (ConfigError, NumericAbort, config_from_dict, emit_report,
                     rederive_report, run_algorithm, run_gamma_sweep)


def _load_config(path: str, overrides: argparse.Namespace) -> "ExperimentConfig":
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path!r}: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path!r} is not valid JSON: {e}") from None
    if getattr(overrides, "algorithm", None):
        doc["algorithm"] = overrides.algorithm
    if getattr(overrides, "gamma", None) is not None:
        doc.setdefault("objective", {})["gamma"] = overrides.gamma
    if getattr(overrides, "seed", None) is not None:
        doc["seed"] = overrides.seed
    if getattr(overrides, "out", None):
        doc["output_dir"] = overrides.out
    return config_from_dict(doc)


def _cmd_run(args: argparse.Namespace) -> int:
    config = _load_config(args.config, args)
    out_dir = config.output_dir or "results"
    t0 = time.perf_counter()
    logs = run_algorithm(config)
    elapsed = time.perf_counter() - t0
    clocks = {f"{log.algorithm}_g{log.gamma:g}_s{log.seed}": elapsed / len(logs)
              for log in logs}
    paths = emit_report([(config, log) for log in logs], out_dir, wall_clock=clocks)
    for log in logs:
        fin = log.final
        print(f"{log.algorithm}: rounds={fin['rounds']} type1={fin['type1']:.4f} "
              f"type2={fin['type2']:.4f} constraint_avg={fin['constraint_avg']:.4f}")
    for p in paths:
        print(f"wrote {p}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = _load_config(args.config, args)
    out_dir = config.output_dir or "results"
    t0 = time.perf_counter()
    logs = run_gamma_sweep(config, workers=args.workers)
    elapsed = time.perf_counter() - t0
    clocks = {f"{log.algorithm}_g{log.gamma:g}_s{log.seed}": elapsed / len(logs)
              for log in logs}
    paths = emit_report([(config, log) for log in logs], out_dir, wall_clock=clocks)
    for log in logs:
        fin = log.final
        print(f"gamma={log.gamma:g}: type1={fin['type1']:.4f} type2={fin['type2']:.4f}")
    for p in paths:
        print(f"wrote {p}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    report = rederive_report(args.input)
    for entry in report["runs"]:
        line = f"{entry['file']}: windows={entry['windows']}"
        if "final_round" in entry:
            line += (f" rounds={entry['final_round']}"
                     f" typeI={entry['final_typeI_window']:.4f}"
                     f" typeII={entry['final_typeII_window']:.4f}"
                     f" constraint_avg={entry['final_constraint_avg']:.4f}")
        print(line)
    print(json.dumps(report, indent=1))
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="dmeg")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one configured run")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--algorithm", choices=["dmeg", "bl", "mol", "dmeg_unconstrained"])
    p_run.add_argument("--gamma", type=float)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--out")
    p_run.set_defaults(fn=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="one run per gamma in gamma_sweep")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--seed", type=int)
    p_sweep.add_argument("--out")
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.set_defaults(fn=_cmd_sweep)

    p_rep = sub.add_parser("report", help="re-derive summaries from trajectory files")
    p_rep.add_argument("--in", dest="input", required=True)
    p_rep.set_defaults(fn=_cmd_report)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except NumericAbort as e:
        print(f"numeric abort: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
