"""Command-line harness: run scenarios, sweeps, and phase profiles."""

from __future__ import annotations

import argparse
import json
import sys

from .harness import phase_profile, run_scenario, sweep
from .scenarios import scenario_names
from .trace import RunTrace


def _add_run(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("run", help="run one scenario or JSON config")
    p.add_argument("--scenario", help=f"one of: {', '.join(scenario_names())}")
    p.add_argument("--config", help="path to a scenario JSON document")
    p.add_argument("--serial", action="store_true",
                   help="run the fairness layer strictly serially")
    p.add_argument("--threads", type=int, default=4, metavar="K",
                   help="concurrent fairness task slots (default 4)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", metavar="DIR", help="write trace/report/CSV artifacts")
    p.add_argument("--trace", choices=("on", "off"), default="on")


def _add_sweep(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("sweep", help="grid sweep over n/f/gamma/load")
    p.add_argument("--n", type=int, nargs="+", default=[5, 9, 13])
    p.add_argument("--f", type=int, nargs="+", default=[1])
    p.add_argument("--gamma", nargs="+", default=["1"])
    p.add_argument("--txs", type=int, nargs="+", default=[90])
    p.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    p.add_argument("--out", required=True, metavar="CSV")


def _add_profile(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("profile", help="per-phase mean CPU time from a trace")
    p.add_argument("trace", help="trace.jsonl produced by run")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="batchfair",
        description="Deterministic batch-order-fairness simulator and checkers",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run(sub)
    _add_sweep(sub)
    _add_profile(sub)
    sub.add_parser("scenarios", help="list shipped scenarios")
    args = parser.parse_args(argv)

    if args.command == "scenarios":
        for name in scenario_names():
            print(name)
        return 0

    if args.command == "run":
        target = args.config or args.scenario
        if not target:
            parser.error("run needs --scenario or --config")
        reports = run_scenario(
            target,
            serial=args.serial,
            slots=args.threads,
            seed=args.seed,
            outdir=args.out,
            trace_on=args.trace == "on",
        )
        ok = True
        for rep in reports:
            tag = "".join(f" {k}={v}" for k, v in rep.variant.items())
            print(f"[{rep.scenario}{tag}] mode={rep.mode} "
                  f"emitted={rep.counts['txs_emitted']}/{rep.counts['txs_injected']} "
                  f"digest={rep.emitted_digest[:16]}")
            for name, verdict in rep.verdicts.items():
                print(f"  {name:24s} {'pass' if verdict else 'FAIL'}")
                ok &= verdict
            for mode, m in rep.model_results.items():
                print(f"  model[{mode}]: {json.dumps(m, default=str)[:200]}")
        return 0 if ok else 1

    if args.command == "sweep":
        rows = sweep(
            {"n": args.n, "f": args.f, "gamma": args.gamma, "txs": args.txs},
            args.seeds,
            out_path=args.out,
        )
        for row in rows:
            print(row)
        return 0

    if args.command == "profile":
        means = phase_profile(RunTrace.read_jsonl(args.trace))
        if not means:
            print("trace carries no phase profiles")
            return 0
        for phase, ns in means.items():
            print(f"{phase:12s} {ns / 1e6:10.3f} ms")
        return 0

    return 0


if __name__ == "__main__":
    sys.exit(main())
