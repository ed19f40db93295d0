"""Command-line entry point.

Exit codes: 0 on success, 1 when any cell or step fails, 2 on a
configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import harness
from .config import load_config
from .domain import ConfigurationError

COMMANDS = ("simulate-dataset", "train", "optimize", "experiment", "ablation")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="microopt", description="QoS-aware slice resource allocation")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="TOML config; omitted keys take embedded defaults")
    p.add_argument("--seed", type=int, help="master seed override")
    p.add_argument("--out", help="output directory override")
    p.add_argument("--traffic", type=float, help="optimize: constant traffic in users/s")
    p.add_argument("--q-thresh", type=float, help="optimize: QoS threshold")
    p.add_argument("--beta-thresh", type=float, help="optimize: degradation threshold")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _run(args) -> int:
    cfg = load_config(args.config, seed=args.seed, out_dir=args.out)
    if args.command == "simulate-dataset":
        result = harness.cmd_simulate_dataset(cfg)
        print(json.dumps(result["counts"]))
        return 0
    if args.command == "train":
        print(json.dumps(harness.cmd_train(cfg), sort_keys=True))
        return 0
    if args.command == "optimize":
        row = harness.cmd_optimize(cfg, args.traffic, args.q_thresh, args.beta_thresh)
        print(",".join(row.csv_values()))
        return 0 if row.status == "ok" else 1
    if args.command == "experiment":
        summary = harness.cmd_experiment(cfg)
    else:
        summary = harness.cmd_ablation(cfg)
    print(f"wrote {cfg.out}; failed cells: {summary['n_failed']}")
    return 1 if summary["n_failed"] else 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
