"""Graph and demand generators plus the experiment runner."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from ._rng import derive
from .errors import UnknownGenerator
from .graph import (
    CapacitatedGraph,
    Demand,
    congestion,
    d1_demand,
    read_demand,
    read_graph,
    unit_hop_distances,
)
from .opt import opt_hop_routing
from .router import RouterParams, build_router, expected_flow, route_demand, subflow_diagnostics

CSV_COLUMNS = ["graph", "n", "m", "h", "seed", "opt", "cong_est", "cong_stderr", "ratio",
               "max_hop", "hop_cap", "build_ms", "sample_ms"]


# --------------------------------------------------------------------------
# graphs


def _unit(n: int, edges) -> CapacitatedGraph:
    return CapacitatedGraph.from_edges(n, [(u, v, 1.0) for u, v in edges])


def grid(rows: int, cols: int) -> CapacitatedGraph:
    edges = []
    for i in range(rows):
        for j in range(cols):
            v = i * cols + j
            if j + 1 < cols:
                edges.append((v, v + 1))
            if i + 1 < rows:
                edges.append((v, v + cols))
    return _unit(rows * cols, edges)


def cycle(n: int) -> CapacitatedGraph:
    if n < 3:
        raise ValueError("a cycle needs at least 3 nodes")
    return _unit(n, [(i, (i + 1) % n) for i in range(n)])


def hypercube(d: int) -> CapacitatedGraph:
    n = 1 << d
    return _unit(n, [(v, v ^ (1 << b)) for v in range(n) for b in range(d) if v < v ^ (1 << b)])


def random_regular(n: int, d: int, seed: int = 0, tries: int = 100) -> CapacitatedGraph:
    """Connected random ``d``-regular graph; redraws until connected."""
    for attempt in range(tries):
        nxg = nx.random_regular_graph(d, n, seed=int(derive(seed, attempt).integers(2**31)))
        if nx.is_connected(nxg):
            return _unit(n, nxg.edges())
    raise RuntimeError(f"no connected {d}-regular graph on {n} nodes after {tries} tries")


def gen_lower_bound_family(k: int) -> Tuple[CapacitatedGraph, Demand]:
    """``k`` paths of ``k`` nodes, rungs to the first path, and a root above it.

    Node ``i*k + j`` is the ``j``-th node of path ``i``; the root is ``k*k``.
    The demand asks one unit between the two ends of every path.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    edges = []
    for i in range(k):
        for j in range(k - 1):
            edges.append((i * k + j, i * k + j + 1))
    for i in range(1, k):
        for j in range(k):
            edges.append((i * k + j, j))
    root = k * k
    for j in range(k):
        edges.append((root, j))
    demand = {(i * k, i * k + k - 1): 1.0 for i in range(k)}
    return _unit(k * k + 1, edges), demand


GENERATORS: Dict[str, Callable[..., CapacitatedGraph]] = {
    "grid": grid,
    "cycle": cycle,
    "hypercube": hypercube,
    "random_regular": random_regular,
    "lower_bound": lambda k: gen_lower_bound_family(k)[0],
}


def gen_standard(name: str, params: Optional[Mapping] = None, seed: int = 0) -> CapacitatedGraph:
    params = dict(params or {})
    if name not in GENERATORS:
        raise UnknownGenerator(f"unknown graph family {name!r}; known: {sorted(GENERATORS)}")
    if name == "random_regular":
        params.setdefault("seed", seed)
    return GENERATORS[name](**params)


# --------------------------------------------------------------------------
# demands


def _h_reachable(g: CapacitatedGraph, h: Optional[int]):
    dist = [unit_hop_distances(g, s) for s in range(g.n)]
    limit = math.inf if h is None else h
    return lambda s, t: s != t and dist[s][t] <= limit


def uniform_pairs(g: CapacitatedGraph, seed: int = 0, h: Optional[int] = None, count: int = 8,
                  amount: float = 1.0) -> Demand:
    """``count`` random ordered pairs, each with ``amount``; pairs farther than ``h`` hops are never drawn."""
    ok = _h_reachable(g, h)
    pool = [(s, t) for s in range(g.n) for t in range(g.n) if ok(s, t)]
    if not pool:
        return {}
    rng = derive(seed, 11)
    out: Demand = {}
    for i in rng.integers(0, len(pool), size=count):
        key = pool[int(i)]
        out[key] = out.get(key, 0.0) + amount
    return out


def permutation(g: CapacitatedGraph, seed: int = 0, h: Optional[int] = None, amount: float = 1.0) -> Demand:
    """Each node sends to its image under a random permutation (pairs beyond ``h`` hops dropped)."""
    ok = _h_reachable(g, h)
    perm = derive(seed, 12).permutation(g.n)
    return {(v, int(perm[v])): amount for v in range(g.n) if ok(v, int(perm[v]))}


def single_pair(g: CapacitatedGraph, seed: int = 0, h: Optional[int] = None, s: int = 0, t: int = 1,
                amount: float = 1.0) -> Demand:
    return {(s, t): amount} if s != t else {}


def all_edges(g: CapacitatedGraph, seed: int = 0, h: Optional[int] = None) -> Demand:
    return d1_demand(g)


DEMANDS: Dict[str, Callable[..., Demand]] = {
    "uniform_pairs": uniform_pairs,
    "permutation": permutation,
    "single_pair": single_pair,
    "all_edges": all_edges,
}


def make_demand(name: str, g: CapacitatedGraph, seed: int = 0, h: Optional[int] = None,
                params: Optional[Mapping] = None) -> Demand:
    if name not in DEMANDS:
        raise UnknownGenerator(f"unknown demand generator {name!r}; known: {sorted(DEMANDS)}")
    return DEMANDS[name](g, seed=seed, h=h, **dict(params or {}))


# --------------------------------------------------------------------------
# experiments


@dataclass
class GraphSource:
    name: str
    params: Dict = field(default_factory=dict)
    seed: int = 0
    file: Optional[str] = None
    label: Optional[str] = None

    def load(self, base: Optional[FsPath] = None) -> CapacitatedGraph:
        if self.file:
            path = FsPath(self.file)
            if base is not None and not path.is_absolute():
                path = base / path
            return read_graph(path)
        return gen_standard(self.name, self.params, self.seed)

    @property
    def title(self) -> str:
        if self.label:
            return self.label
        if self.file:
            return FsPath(self.file).stem
        args = "-".join(str(v) for _, v in sorted(self.params.items()))
        return f"{self.name}{'-' + args if args else ''}"


@dataclass
class ExperimentSpec:
    graphs: List[GraphSource]
    h: List[int]
    seeds: List[int] = field(default_factory=lambda: [0])
    demand: str = "uniform_pairs"
    demand_params: Dict = field(default_factory=dict)
    demand_file: Optional[str] = None
    samples: int = 32
    router_seed: int = 0
    router: Dict = field(default_factory=dict)
    subflow_samples: int = 0
    exact: bool = False
    record_timing: bool = True
    output: Optional[str] = None
    base_dir: Optional[str] = None

    def __post_init__(self):
        if not self.graphs:
            raise ValueError("an experiment needs at least one graph")
        if any(h < 1 for h in self.h):
            raise ValueError("hop bounds must be at least 1")
        for gs in self.graphs:
            if not gs.file and gs.name not in GENERATORS:
                raise UnknownGenerator(f"unknown graph family {gs.name!r}")
        if not self.demand_file and self.demand not in DEMANDS:
            raise UnknownGenerator(f"unknown demand generator {self.demand!r}")

    @classmethod
    def from_dict(cls, d: Mapping, base_dir: Optional[str] = None) -> "ExperimentSpec":
        d = dict(d)
        graphs = [GraphSource(**g) for g in d.pop("graphs")]
        dem = d.pop("demand", "uniform_pairs")
        if isinstance(dem, Mapping):
            d.setdefault("demand_params", dem.get("params", {}))
            if "file" in dem:
                d.setdefault("demand_file", dem["file"])
            dem = dem.get("generator", "uniform_pairs")
        h = d.pop("h")
        h = [h] if isinstance(h, int) else list(h)
        return cls(graphs=graphs, h=h, demand=dem, base_dir=base_dir, **d)

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh), base_dir=str(FsPath(path).resolve().parent))


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        if math.isinf(x):
            return "inf"
        return repr(x)
    return str(x)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("HOPROUTE_THREADS", "1")))
    except ValueError:
        return 1


def run_experiment(spec: ExperimentSpec, outdir=None) -> dict:
    """Run every (graph, h, seed) cell and write ``results.csv`` and ``summary.json``.

    A router is built once per (graph, h).  A failing cell is recorded with
    its error message and the run moves on.
    """
    base = FsPath(spec.base_dir) if spec.base_dir else None
    outdir = outdir or spec.output
    params = RouterParams(**spec.router)
    groups = [(gi, h) for gi in range(len(spec.graphs)) for h in spec.h]

    def run_group(key):
        gi, h = key
        src = spec.graphs[gi]
        cells = []
        try:
            g = src.load(base)
            t0 = time.perf_counter()
            router = build_router(g, h, params, spec.router_seed)
            build_ms = (time.perf_counter() - t0) * 1000
        except Exception as exc:  # noqa: BLE001 - recorded per cell
            return [{"graph": src.title, "h": h, "seed": s, "error": f"{type(exc).__name__}: {exc}"} for s in spec.seeds]
        for seed in spec.seeds:
            cells.append(_run_cell(spec, src.title, g, h, seed, router, build_ms, base))
        return cells

    workers = _threads()
    if workers > 1 and len(groups) > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run_group, groups))
    else:
        results = [run_group(k) for k in groups]
    cells = [c for group in results for c in group]

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for c in cells:
        writer.writerow([_fmt(c.get(col)) for col in CSV_COLUMNS])
    ratios = sorted(c["ratio"] for c in cells if c.get("ratio") is not None and math.isfinite(c["ratio"]))
    summary = {
        "cells": cells,
        "failures": [c for c in cells if "error" in c],
        "ratio_median": float(np.median(ratios)) if ratios else None,
        "ratio_max": max(ratios) if ratios else None,
        "ratios": ratios,
    }
    if outdir is not None:
        out = FsPath(outdir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "results.csv").write_text(buf.getvalue(), encoding="utf-8")
        (out / "summary.json").write_text(json.dumps(_jsonable(summary), sort_keys=True, indent=1) + "\n",
                                           encoding="utf-8")
    summary["csv"] = buf.getvalue()
    return summary


def _run_cell(spec, title, g, h, seed, router, build_ms, base) -> dict:
    cell = {"graph": title, "n": g.n, "m": g.m, "h": h, "seed": seed, "hop_cap": router.hop_cap}
    try:
        if spec.demand_file:
            path = FsPath(spec.demand_file)
            if base is not None and not path.is_absolute():
                path = base / path
            demand = read_demand(path, g.n)
        else:
            demand = make_demand(spec.demand, g, seed, h, spec.demand_params)
        if not demand:
            raise ValueError("demand is empty")
        opt = opt_hop_routing(g, demand, h)
        if not math.isfinite(opt.value):
            raise ValueError("some demanded pair has no path within the hop bound")
        t0 = time.perf_counter()
        rep = route_demand(router, demand, spec.samples, seed)
        sample_ms = (time.perf_counter() - t0) * 1000
        cell.update({
            "opt": opt.value,
            "cong_est": rep.congestion,
            "cong_stderr": rep.congestion_stderr,
            "ratio": rep.congestion / opt.value,
            "max_hop": rep.max_hop,
            "hop_stretch": rep.max_hop / h,
            "build_ms": round(build_ms, 3) if spec.record_timing else 0,
            "sample_ms": round(sample_ms, 3) if spec.record_timing else 0,
        })
        if spec.exact:
            cell["ratio_exact"] = congestion(expected_flow(router, demand), g) / opt.value
        if spec.subflow_samples:
            cell["subflow"] = subflow_diagnostics(router, demand, opt.witness, spec.subflow_samples, seed)
    except Exception as exc:  # noqa: BLE001 - recorded per cell
        cell["error"] = f"{type(exc).__name__}: {exc}"
    return cell


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    if isinstance(x, np.generic):
        return x.item()
    return x
