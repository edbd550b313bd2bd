"""Command line entry point: ``simulate``, ``check-graph`` and ``verify``."""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config, parse_int_list
from .graph import BudgetExceeded, GraphError, verify_sufficient_connectivity
from .harness import EXIT_CONFIG, EXIT_IO, _graph, configure_logging, run_suite


def _cmd_simulate(args) -> int:
    try:
        suite = load_config(args.config)
        if args.seeds:
            suite.seeds = parse_int_list(args.seeds)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO if isinstance(exc, OSError) else EXIT_CONFIG
    code = run_suite(suite, args.out, parallel=args.parallel)
    if code == EXIT_CONFIG:
        print("invalid config (see log)", file=sys.stderr)
    elif code == EXIT_IO:
        print("IO failure (see log)", file=sys.stderr)
    return code


def _cmd_check_graph(args) -> int:
    try:
        suite = load_config(args.config)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    status = 0
    for spec in suite.runs:
        for seed in suite.seeds:
            try:
                g = _graph(spec.params, seed)
                rep = verify_sufficient_connectivity(g, spec["b"], args.mode, args.budget, seed)
            except BudgetExceeded as exc:
                print(f"{spec.name} seed={seed}: {exc}")
                status = 1
                continue
            except (GraphError, OSError) as exc:
                print(f"{spec.name} seed={seed}: rejected: {exc}")
                status = EXIT_CONFIG
                continue
            verdict = "pass" if rep.all_pass else "FAIL"
            print(f"{spec.name} seed={seed}: {verdict} mode={rep.mode} checked={rep.checked_count} tau={rep.tau}")
            if not rep.all_pass:
                print(f"  counterexample kept edges: {rep.counterexample.kept_edges()}")
                status = max(status, 1)
    return status


def _cmd_verify(args) -> int:
    from .acceptance import run_all

    numbers = parse_int_list(args.only) if args.only else None
    results = run_all(numbers)
    for r in results:
        print(r.line(), flush=True)
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed" + (f"; failing: {failed}" if failed else ""))
    return 0 if not failed else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="resist", description="Simulate consensus gradient descent under link attacks.")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run an experiment suite and write metric CSVs")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", required=True)
    sim.add_argument("--seeds", help="comma-separated seeds overriding the config")
    sim.add_argument("--parallel", type=int, default=1)
    sim.set_defaults(func=_cmd_simulate)

    cg = sub.add_parser("check-graph", help="check every filtered graph keeps a source component")
    cg.add_argument("--config", required=True)
    cg.add_argument("--mode", choices=["exhaustive", "sampled"], default=None)
    cg.add_argument("--budget", type=int, default=10_000)
    cg.set_defaults(func=_cmd_check_graph)

    ver = sub.add_parser("verify", help="run the acceptance battery")
    ver.add_argument("--suite", choices=["acceptance"], default="acceptance")
    ver.add_argument("--only", help="comma-separated criterion numbers")
    ver.set_defaults(func=_cmd_verify)
    return ap


def main(argv=None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
