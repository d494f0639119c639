"""Command-line entry point: ``sdaas generate|compose|allocate|sweep|verify``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .core import NetworkParseError, NetworkValidationError, load_network
from .harness import (
    GenerationError,
    OracleLimitError,
    Scenario,
    generate_scenario,
    run_experiment,
    sweep,
    verify_outdir,
    write_compose_csv,
    write_sweep_csv,
)

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE = 0, 2, 3


class Infeasible(RuntimeError):
    pass


def _generate(args):
    network = load_network(args.network) if args.network else None
    sc = generate_scenario(n_nodes=args.nodes, n_requests=args.requests, fleet_size=args.fleet,
                           pad_range=tuple(args.pads), seed=args.seed, n_windows=args.windows,
                           side=args.side, network=network)
    sc.save(args.output)
    print(f"wrote {args.output}: {len(sc.network)} nodes, {len(sc.requests)} requests, "
          f"source {sc.provider.source}")


def _compose(args):
    sc = Scenario.load(args.scenario)
    services = sc.compose(congestion=not args.no_congestion)
    write_compose_csv(services, args.output)
    n_ok = sum(s.eligible for s in services)
    print(f"wrote {args.output}: {n_ok}/{len(services)} requests eligible")
    if not n_ok:
        raise Infeasible("no request is servable at a profit")


def _rl_overrides(args):
    return {"episodes": args.episodes, "seed": args.seed,
            "slot_granularity": args.slot_granularity, "encoder": args.encoder}


def _allocate(args):
    sc = Scenario.load(args.scenario)
    services = sc.compose()
    if not any(s.eligible for s in services):
        raise Infeasible("no request is servable at a profit")
    rep = run_experiment(sc, [args.method], outdir=args.output, services=services,
                         **_rl_overrides(args))
    m = args.method
    print(f"{m}: profit {rep.profit[m]:.3f}, served {rep.served[m]}/{len(services)}, "
          f"{rep.seconds[m]:.3f}s -> {Path(args.output) / m}")


def _sweep(args):
    sc = Scenario.load(args.scenario)
    rows = sweep(sc, args.vary, args.values, methods=args.methods, seeds=args.seeds,
                 n_jobs=args.jobs, **_rl_overrides(args))
    write_sweep_csv(rows, args.output)
    print(f"wrote {args.output}: {len(rows)} rows")


def _verify(args):
    problems = verify_outdir(args.outdir)
    for p in problems:
        print(p, file=sys.stderr)
    if problems:
        return EXIT_INVALID
    print(f"{args.outdir}: all invariants hold")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdaas", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="draw a seeded scenario")
    g.add_argument("--nodes", type=int, default=129)
    g.add_argument("--requests", type=int, default=50)
    g.add_argument("--fleet", type=int, default=30)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--pads", type=int, nargs=2, default=(1, 4), metavar=("LO", "HI"))
    g.add_argument("--windows", type=int, default=8, help="number of one-hour windows")
    g.add_argument("--side", type=float, default=10000.0, help="area side in meters")
    g.add_argument("--network", help="use this network file instead of a random one")
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=_generate)

    c = sub.add_parser("compose", help="compose every request of a scenario")
    c.add_argument("scenario")
    c.add_argument("--no-congestion", action="store_true")
    c.add_argument("-o", "--output", required=True)
    c.set_defaults(func=_compose)

    for name, func, helptext in (("allocate", _allocate, "allocate with one method"),
                                 ("sweep", _sweep, "vary request count or fleet size")):
        a = sub.add_parser(name, help=helptext)
        a.add_argument("scenario")
        a.add_argument("--episodes", type=int)
        a.add_argument("--seed", type=int)
        a.add_argument("--slot-granularity", type=float)
        a.add_argument("--encoder", choices=("auto", "exact", "profit"),
                       help="state encoder of the RL method")
        a.add_argument("-o", "--output", required=True)
        a.set_defaults(func=func)
        if name == "allocate":
            a.add_argument("--method", choices=("rl", "fcfs", "oracle"), default="rl")
        else:
            a.add_argument("--vary", choices=("requests", "fleet"), required=True)
            a.add_argument("--values", type=int, nargs="+", required=True)
            a.add_argument("--methods", nargs="+", default=["rl", "fcfs"],
                           choices=("rl", "fcfs", "oracle"))
            a.add_argument("--seeds", type=int, nargs="+")
            a.add_argument("--jobs", type=int, default=1)

    v = sub.add_parser("verify", help="re-check all invariants of an allocate output dir")
    v.add_argument("outdir")
    v.set_defaults(func=_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args) or EXIT_OK
    except (Infeasible, GenerationError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NetworkParseError, NetworkValidationError, OracleLimitError, ValueError,
            KeyError, FileNotFoundError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
