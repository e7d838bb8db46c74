"""Command-line entry point: ``noisyls {run,bound,simulate,sweep}``."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from noisyls import theory
from noisyls.errors import ConfigurationError, DomainError
from noisyls.harness import config as config_mod
from noisyls.harness.experiments import (
    run_experiment,
    run_report,
    run_simulation,
    run_sweep,
    save_run,
    save_simulation,
)

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG = 0, 1, 2


def _parser():
    ap = argparse.ArgumentParser(prog="noisyls", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("run", "run optimiser trials and compare with the bound"),
        ("bound", "print every theory constant"),
        ("simulate", "Monte Carlo simulation of the abstract process"),
        ("sweep", "Cartesian sweep over configuration keys"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, type=Path, help="TOML configuration file")
        p.add_argument("--trials", type=int, help="override the number of trials")
        p.add_argument("--seed", type=int, help="override the base seed")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--csv", action="store_true", help="machine-readable output on stdout")
        p.add_argument("--threads", type=int, help="worker processes for trials")
        if name == "simulate":
            p.add_argument(
                "--strict-literal",
                action="store_true",
                help="also fail when the true-success count exceeds its bound "
                "counting the iteration that reaches Z_eps",
            )
    return ap


def _load(args):
    cfg = config_mod.load(args.config)
    if args.seed is not None:
        cfg = config_mod.set_key(cfg, "experiment.base_seed", args.seed)
    if args.out is not None:
        cfg = config_mod.set_key(cfg, "experiment.output_dir", str(args.out))
    return cfg


def _emit(items, as_csv, stream=None):
    stream = sys.stdout if stream is None else stream
    if as_csv:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(["key", "value"])
        w.writerows(items)
    else:
        width = max((len(str(k)) for k, _ in items), default=0)
        for k, v in items:
            print(f"{k:<{width}}  {v}", file=stream)


def cmd_run(args, cfg) -> int:
    out = run_experiment(cfg, args.trials, args.threads)
    out_dir = Path(cfg["experiment"]["output_dir"])
    save_run(out, out_dir)
    items = run_report(out) + [("wall_time_s", round(out.wall_time, 3)), ("output_dir", out_dir)]
    _emit(items, args.csv)
    if out.censored:
        print(f"warning: {out.censored} trial(s) hit max_iter without stopping", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_bound(args, cfg) -> int:
    exp_theory = config_mod.build(cfg).theory
    if exp_theory is None:
        raise ConfigurationError("theory is disabled in this configuration")
    report = theory.bound_report(exp_theory, bool(cfg["theory"].get("compare_remark", False)))
    _emit(list(report.items()), args.csv)
    return EXIT_CHECK_FAILED if "error" in report else EXIT_OK


def cmd_simulate(args, cfg) -> int:
    seed = args.seed if args.seed is not None else None
    out = run_simulation(cfg, args.trials, seed)
    out_dir = Path(cfg["experiment"]["output_dir"])
    save_simulation(out, out_dir)
    items = out.report() + [("output_dir", out_dir)]
    _emit(items, args.csv)
    return EXIT_OK if out.passed(args.strict_literal) else EXIT_CHECK_FAILED


def cmd_sweep(args, cfg) -> int:
    out_dir = Path(cfg["experiment"]["output_dir"])
    points = run_sweep(cfg, out_dir, args.trials, args.threads)
    items = [(f"point_{row[0]}_mean_N_eps", row[-4]) for row in points]
    items += [(f"point_{row[0]}_bound", row[-1]) for row in points]
    _emit(items, args.csv)
    return EXIT_CHECK_FAILED if any(row[-2] for row in points) else EXIT_OK


COMMANDS = {"run": cmd_run, "bound": cmd_bound, "simulate": cmd_simulate, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _load(args)
        return COMMANDS[args.command](args, cfg)
    except DomainError as err:
        name = f" [{err.assumption}]" if err.assumption else ""
        print(f"error{name}: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigurationError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
