"""Command line entry point ``timing-leak-lab``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ConfigError, TimingLeakError
from .experiments import load_config, run, validate
from .io import outcome_to_csv, queue_to_csv, traces_from_csv
from .schedulers import resolve_policy

log = logging.getLogger("timing_leak_lab")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="timing-leak-lab",
        description="Scheduler timing side-channel experiments.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--workers", type=int, default=None)
    p_run.add_argument(
        "--strict", action="store_true", help="exit nonzero if any grid point errored"
    )

    p_val = sub.add_parser("validate", help="check a config without running it")
    p_val.add_argument("--config", required=True)

    p_sim = sub.add_parser("simulate", help="schedule a trace CSV under one policy")
    p_sim.add_argument("--traces", required=True, help="CSV with slot,user_indicator,attacker_indicator")
    p_sim.add_argument("--policy", choices=("fcfs", "acc", "tdma"), default="fcfs")
    p_sim.add_argument("--t-acc", type=int, default=None, dest="t_acc")
    p_sim.add_argument("--priority", choices=("user", "attacker"), default="user")
    p_sim.add_argument("--out", default=".", help="directory for outcome.csv and queue.csv")
    return parser


def _simulate(args) -> int:
    user, attacker = traces_from_csv(Path(args.traces))
    policy = resolve_policy(args.policy, T_acc=args.t_acc, priority=args.priority)
    outcome = policy.run(user, attacker)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outcome_to_csv(outcome, out / "outcome.csv")
    queue_to_csv(outcome, out / "queue.csv")
    print(f"{policy.name}: {len(outcome.user_trace)} user jobs, "
          f"{len(outcome.attacker_trace)} attacker jobs, {outcome.drain_slots} drain slots")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s"
    )
    try:
        if args.command == "validate":
            diags = validate(args.config)
            for d in diags:
                print(d)
            if not diags:
                print("ok")
            return 1 if diags else 0
        if args.command == "simulate":
            return _simulate(args)

        cfg = load_config(args.config)
        result = run(cfg, seed=args.seed, out_dir=args.out, workers=args.workers)
        counts = result.statuses()
        print(f"{cfg.stem}: {len(result.rows)} rows " + " ".join(
            f"{k}={v}" for k, v in sorted(counts.items())))
        if args.strict and counts.get("error", 0):
            return 1
        return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TimingLeakError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
