"""Command line front end: ``hoproute <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import harness
from ._rng import seed_sequence
from .graph import read_demand, read_graph, write_demand, write_graph
from .harness import ExperimentSpec, run_experiment
from .opt import opt_hop_routing
from .router import RouterParams, build_router, load_router, route_demand, sample_path, save_router
from .schedule import random_delay_schedule


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hoproute", description="Oblivious routing with hop bounds.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def cmd(name, help_text):
        # -h is the hop bound, so help lives on --help only
        sp = sub.add_parser(name, help=help_text, description=help_text, add_help=False)
        sp.add_argument("--help", action="help", help="show this help message and exit")
        return sp

    b = cmd("build", "Build a router for a graph and hop bound.")
    b.add_argument("-g", "--graph", required=True)
    b.add_argument("-h", "--hops", type=int, required=True)
    b.add_argument("-C", type=int, default=6, help="completion exponent")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--rounds", type=int, default=None, help="price-loop rounds per router")
    b.add_argument("-o", "--output", required=True)

    s = cmd("sample", "Sample paths for one pair from a saved router.")
    s.add_argument("-r", "--router", required=True)
    s.add_argument("-s", "--source", type=int, required=True)
    s.add_argument("-t", "--target", type=int, required=True)
    s.add_argument("-n", "--count", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)

    r = cmd("route", "Estimate the congestion of routing a demand.")
    r.add_argument("-r", "--router", required=True)
    r.add_argument("-d", "--demand", required=True)
    r.add_argument("--samples", type=int, default=32)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("-o", "--output", required=True)

    o = cmd("opt", "Solve the optimal hop-constrained routing LP.")
    o.add_argument("-g", "--graph", required=True)
    o.add_argument("-d", "--demand", required=True)
    o.add_argument("-h", "--hops", type=int, default=None, help="hop bound (omit for unconstrained)")
    o.add_argument("-o", "--output", required=True)

    sc = cmd("schedule", "Random-delays schedule for a set of paths.")
    sc.add_argument("-g", "--graph", required=True)
    sc.add_argument("--paths", required=True, help="one path per line, space-separated node ids")
    sc.add_argument("--seed", type=int, default=0)
    sc.add_argument("-o", "--output", required=True)

    gn = cmd("gen", "Generate a benchmark graph.")
    gn.add_argument("family", choices=sorted(harness.GENERATORS))
    gn.add_argument("params", nargs="*", type=int, help="family parameters, e.g. rows cols for grid")
    gn.add_argument("--seed", type=int, default=0)
    gn.add_argument("--demand", default=None, help="also write the canonical demand (lower_bound only)")
    gn.add_argument("-o", "--output", required=True)

    ev = cmd("eval", "Run an experiment spec.")
    ev.add_argument("-c", "--config", required=True)
    ev.add_argument("-o", "--output", required=True)
    return p


_GEN_ARGS = {
    "grid": ("rows", "cols"),
    "cycle": ("n",),
    "hypercube": ("d",),
    "random_regular": ("n", "d"),
    "lower_bound": ("k",),
}


def _read_paths(path) -> List[tuple]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            out.append(tuple(int(x) for x in line.split()))
    return out


def _dump(obj, path) -> None:
    Path(path).write_text(json.dumps(harness._jsonable(obj), sort_keys=True, indent=1) + "\n", encoding="utf-8")


def main(argv: Optional[List[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    if args.command == "build":
        g = read_graph(args.graph)
        router = build_router(g, args.hops, RouterParams(C=args.C, max_rounds=args.rounds), args.seed)
        save_router(router, args.output)
        print(json.dumps(harness._jsonable(router.stats()), sort_keys=True))
    elif args.command == "sample":
        router = load_router(args.router)
        for i in range(args.count):
            p = sample_path(router, args.source, args.target, seed_sequence(args.seed, i))
            print(" ".join(map(str, p)))
    elif args.command == "route":
        router = load_router(args.router)
        demand = read_demand(args.demand, router.n)
        rep = route_demand(router, demand, args.samples, args.seed)
        _dump(rep.to_dict(router.G), args.output)
    elif args.command == "opt":
        g = read_graph(args.graph)
        res = opt_hop_routing(g, read_demand(args.demand, g.n), args.hops)
        _dump(res.to_dict(g), args.output)
    elif args.command == "schedule":
        g = read_graph(args.graph)
        sched = random_delay_schedule(_read_paths(args.paths), g, args.seed)
        _dump(sched.to_dict(g), args.output)
    elif args.command == "gen":
        names = _GEN_ARGS[args.family]
        if len(args.params) != len(names):
            print(f"{args.family} takes parameters: {' '.join(names)}", file=sys.stderr)
            return 2
        params = dict(zip(names, args.params))
        if args.family == "lower_bound":
            g, demand = harness.gen_lower_bound_family(params["k"])
            if args.demand:
                write_demand(demand, args.demand)
        else:
            g = harness.gen_standard(args.family, params, args.seed)
        write_graph(g, args.output)
    elif args.command == "eval":
        spec = ExperimentSpec.load(args.config)
        out = run_experiment(spec, args.output)
        print(f"{len(out['cells'])} cells, {len(out['failures'])} failures, median ratio {out['ratio_median']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
