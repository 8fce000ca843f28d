"""Command-line entry point: ``npmarket run | verify | oracle``."""
from __future__ import annotations

import argparse
import json
import random
import sys

from .chain import load_blocks, verify_chain
from .config import CONSENSUS, SEED_MAX, ConfigError, ExperimentConfig, load_config


class CliError(Exception):
    pass


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value <= SEED_MAX:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="npmarket", description="Permissioned marketplace blockchain simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment sweep and write reports")
    run.add_argument("--config", help="experiment config (JSON); built-in defaults when omitted")
    run.add_argument("--consensus", choices=CONSENSUS, help="overrides the consensus list in the config")
    run.add_argument("--seed", type=_seed, help="overrides the seed in the config; one of the two is required")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--trace", action="store_true", help="also dump event traces and ledgers per cell")
    run.add_argument("--jobs", type=_positive, default=1, help="cells to run in parallel")

    verify = sub.add_parser("verify", help="check hash links of a ledger dump")
    verify.add_argument("ledger")

    oracle = sub.add_parser("oracle", help="replay contract scenarios against the reference model")
    src = oracle.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", help="scenario file (JSON)")
    src.add_argument("--random", type=_positive, metavar="N", help="generate N random scenarios")
    oracle.add_argument("--seed", type=_seed, default=None, help="seed for --random")
    return parser


def cmd_run(args) -> int:
    from .bench import run_experiment

    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.consensus:
        cfg.consensus = [args.consensus]
    seed = args.seed if args.seed is not None else cfg.seed
    if seed is None:
        raise CliError("a seed is required: pass --seed or set \"seed\" in the config")
    report = run_experiment(cfg, seed, out_dir=args.out, trace=args.trace, jobs=args.jobs)
    disagree = [c["cell"] for c in report.cells if not c["tips_agree"]]
    print(f"{len(report.cells)} cells written to {args.out}")
    if disagree:
        print(f"replica tips differ in: {', '.join(disagree)}", file=sys.stderr)
        return 1
    return 0


def cmd_verify(args) -> int:
    try:
        blocks = load_blocks(args.ledger)
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"{args.ledger}: not a ledger dump ({exc})") from None
    if verify_chain(blocks):
        print(f"OK height={blocks[-1].height} tip={blocks[-1].hash.hex()}")
        return 0
    print(f"FAIL {args.ledger}: chain does not verify", file=sys.stderr)
    return 1


def cmd_oracle(args) -> int:
    from .oracle import load_scenario, run_scenario
    from .scenarios import random_scenario

    if args.scenario:
        try:
            scenarios = [load_scenario(args.scenario)]
        except json.JSONDecodeError as exc:
            raise CliError(f"{args.scenario}: invalid JSON: {exc}") from None
    else:
        if args.seed is None:
            raise CliError("--random needs --seed")
        rng = random.Random(args.seed)
        scenarios = [random_scenario(rng) for _ in range(args.random)]
    failures = 0
    for i, scenario in enumerate(scenarios):
        try:
            problems = run_scenario(scenario)
        except (KeyError, TypeError, ValueError) as exc:
            raise CliError(f"malformed scenario {i}: {exc}") from None
        for p in problems:
            print(f"scenario {i}: {p}")
        failures += bool(problems)
    print(f"{len(scenarios)} scenario(s), {failures} with mismatches")
    return 1 if failures else 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    handler = {"run": cmd_run, "verify": cmd_verify, "oracle": cmd_oracle}[args.command]
    try:
        return handler(args)
    except (CliError, ConfigError) as exc:
        print(f"npmarket: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"npmarket: error: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
