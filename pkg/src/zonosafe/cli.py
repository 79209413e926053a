"""Command line entry point: ``zonosafe <subcommand> --config FILE --out DIR``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import experiments
from .exceptions import ConfigError, InfeasibleSynthesisError, ZonosafeError

EXIT_OK, EXIT_INFEASIBLE, EXIT_CONFIG = 0, 2, 3

log = logging.getLogger("zonosafe")


def build_parser():
    p = argparse.ArgumentParser(prog="zonosafe", description=__doc__)
    p.add_argument("command", choices=["synth", "simulate", "id", "nesting", "sweep"])
    p.add_argument("--config", required=True,
                   help="YAML config file, or builtin:benchmark / builtin:lambda_sweep")
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    p.add_argument("--mode", choices=["prior", "noprior", "both"],
                   help="use the prior equality constraint, drop it, or run both")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run(args) -> int:
    cfg = experiments.ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    cmd = args.command
    if cmd == "sweep":
        status, res = experiments.cmd_sweep(cfg, args.out, args.jobs, args.mode)
        log.info("sweep finished in %.1f s", res.runtime)
    elif cmd == "synth":
        status, _ = experiments.cmd_synth(cfg, args.out, args.mode or "prior")
    elif cmd == "simulate":
        status, _ = experiments.cmd_simulate(cfg, args.out, args.mode or "prior")
    elif cmd == "nesting":
        status, _ = experiments.cmd_nesting(cfg, args.out)
    else:
        status, _ = experiments.cmd_id(cfg, args.out)
    if status == EXIT_INFEASIBLE:
        log.error("synthesis infeasible; see %s", args.out / "report.json")
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleSynthesisError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ZonosafeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
