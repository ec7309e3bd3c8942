"""Oblivious router with a hard hop cap, built from two D1-routers.

The input graph is completed with tiny-capacity virtual edges.  A path for a
pair ``(s, t)`` is produced by drawing ``r`` trees from the first router that
contain both endpoints, collecting the nodes of their ``s``-``t`` routes, and
then drawing trees from the second router until one contains all those nodes
and its simplified ``s``-``t`` route avoids virtual edges.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ._rng import Seed, derive, seed_sequence
from .d1_router import MwuConfig, build_d1_router
from .embedding import EmbeddingDistribution, PartialTreeEmbedding
from .errors import NodePairInvalid, RetriesExhausted
from .graph import (
    CapacitatedGraph,
    Demand,
    Path,
    clean_demand,
    complete_graph,
    congestion,
    hop,
    is_simple,
    simplify_path,
)


@dataclass
class RouterParams:
    C: int = 6
    r: Optional[int] = None
    retry_cap: int = 10_000
    eta: float = 0.2
    max_rounds: Optional[int] = None
    target: object = "auto"
    mix: float = 1e-3
    candidates: int = 1
    workers: int = 1
    edge_hops: Optional[int] = None
    c_beta: float = 1.0

    def mwu(self, h: int, eps: float) -> MwuConfig:
        return MwuConfig(
            h=h, eps=eps, eta=self.eta, max_rounds=self.max_rounds, target=self.target, C=self.C,
            mix=self.mix, candidates=self.candidates, workers=self.workers,
            edge_hops=self.edge_hops, c_beta=self.c_beta,
        )


def default_cover_count(n: int) -> int:
    return max(1, math.ceil(2 * math.log2(max(n, 2))))


@dataclass
class ObliviousRouter:
    G: CapacitatedGraph
    H: CapacitatedGraph
    T1: EmbeddingDistribution
    T2: EmbeddingDistribution
    h: int
    r: int
    eps1: float
    eps2: float
    hop_cap: int
    retry_cap: int = 10_000
    params: RouterParams = field(default_factory=RouterParams)
    _routes: Dict[Tuple[int, int, int], Tuple[Path, bool]] = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.G.n

    def stats(self) -> dict:
        return {
            "n": self.n,
            "m": self.G.m,
            "h": self.h,
            "r": self.r,
            "eps1": self.eps1,
            "eps2": self.eps2,
            "hop_cap": self.hop_cap,
            "T1": _summary(self.T1),
            "T2": _summary(self.T2),
        }

    def f_route(self, k: int, s: int, t: int) -> Tuple[Path, bool]:
        """Simplified ``s``-``t`` route in the ``k``-th member of T2 and whether it is real."""
        key = (k, s, t)
        hit = self._routes.get(key)
        if hit is None:
            p = simplify_path(self.T2.embeddings[k].route(s, t))
            real = all(self.G.has_edge(a, b) for a, b in zip(p, p[1:]))
            hit = self._routes[key] = (p, real)
        return hit


def _summary(dist: EmbeddingDistribution) -> dict:
    keys = ("dilation", "exclusion", "eps", "alpha", "alpha_target", "converged", "rounds", "repair_samples")
    out = {k: dist.annotations.get(k) for k in keys}
    out["size"] = len(dist)
    return out


def build_router(g: CapacitatedGraph, h: int, params: Optional[RouterParams] = None, seed: Seed = 0) -> ObliviousRouter:
    if h < 1:
        raise ValueError("hop bound must be at least 1")
    params = params or RouterParams()
    H = complete_graph(g, params.C)
    r = params.r if params.r is not None else default_cover_count(g.n)
    eps1 = 1.0 / (4 * h)
    T1 = build_d1_router(H, params.mwu(h, eps1), seed_sequence(seed, 1))
    dil1 = max(1, T1.annotations["dilation"])
    # beta_1 * h is the certified dilation of T1
    eps2 = 1.0 / (2 * r * dil1)
    T2 = build_d1_router(H, params.mwu(h, eps2), seed_sequence(seed, 2))
    hop_cap = int(T2.annotations["dilation"])
    real = g if not g.virtual.any() else g.real_subgraph()
    return ObliviousRouter(real, H, T1, T2, h, r, eps1, eps2, hop_cap, params.retry_cap, params)


# --------------------------------------------------------------------------
# sampling


def _check_pair(router: ObliviousRouter, s: int, t: int) -> None:
    if s == t:
        raise NodePairInvalid(f"source and target coincide ({s})")
    if not (0 <= s < router.n and 0 <= t < router.n):
        raise NodePairInvalid(f"pair {(s, t)} is outside the node range [0, {router.n})")


def _draw_conditioned(dist: EmbeddingDistribution, s: int, t: int, rng, cap: int) -> int:
    mass = dist.inclusion[:, s] & dist.inclusion[:, t]
    if not mass.any():
        raise RetriesExhausted(f"no tree of the first router contains both {s} and {t}")
    for _ in range(cap):
        k = dist.draw(rng)
        if mass[k]:
            return k
    raise RetriesExhausted(f"no tree containing {s} and {t} within {cap} draws")


@dataclass
class SampleTrace:
    """Everything drawn while producing one path."""

    covers: List[int]
    cover_paths: List[Path]
    cover_nodes: frozenset
    f_index: int
    attempts: int
    path: Path


def sample_path(router: ObliviousRouter, s: int, t: int, seed: Seed = 0) -> Path:
    return sample_path_trace(router, s, t, seed).path


def sample_path_trace(router: ObliviousRouter, s: int, t: int, seed: Seed = 0) -> SampleTrace:
    """Sample a path and keep the intermediate draws (for conditioning checks)."""
    s, t = int(s), int(t)
    _check_pair(router, s, t)
    rng = derive(seed, s, t)
    T1, T2 = router.T1, router.T2
    covers, qs = [], []
    union = set()
    for _ in range(router.r):
        j = _draw_conditioned(T1, s, t, rng, router.retry_cap)
        q = T1.embeddings[j].route(s, t)
        covers.append(j)
        qs.append(q)
        union.update(q)
    need = sorted(union)
    ok = T2.inclusion[:, need].all(axis=1)
    if not any(ok[k] and router.f_route(k, s, t)[1] for k in np.flatnonzero(ok)):
        raise RetriesExhausted(f"no tree of the second router gives a real route for {(s, t)}")
    for attempt in range(1, router.retry_cap + 1):
        k = T2.draw(rng)
        if not ok[k]:
            continue
        p, real = router.f_route(k, s, t)
        if not real:
            continue
        assert hop(p) <= router.hop_cap, f"path with {hop(p)} hops exceeds cap {router.hop_cap}"
        return SampleTrace(covers, qs, frozenset(union), int(k), attempt, p)
    raise RetriesExhausted(f"no acceptable tree for {(s, t)} within {router.retry_cap} draws")


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("HOPROUTE_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn, items):
    workers = _threads()
    if workers == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# fractional and integral routing


@dataclass
class RouteReport:
    flow: np.ndarray
    stderr: np.ndarray
    congestion: float
    congestion_stderr: float
    max_hop: int
    samples: int
    pairs: int
    paths: Optional[Dict[Tuple[int, int], List[Path]]] = None

    def to_dict(self, g: CapacitatedGraph) -> dict:
        return {
            "congestion": self.congestion,
            "congestion_stderr": self.congestion_stderr,
            "max_hop": self.max_hop,
            "samples": self.samples,
            "pairs": self.pairs,
            "flow": {f"{u} {v}": float(x) for (u, v), x in zip(g.edges, self.flow) if x},
            "stderr": {f"{u} {v}": float(x) for (u, v), x in zip(g.edges, self.stderr) if x},
        }


def samples_for(amount: float, samples_per_unit: int) -> int:
    return samples_per_unit * max(1, math.ceil(amount))


def route_demand(router: ObliviousRouter, demand: Mapping[Tuple[int, int], float], samples_per_unit: int = 32,
                 seed: Seed = 0, keep_paths: bool = False) -> RouteReport:
    """Monte Carlo estimate of the expected flow of routing ``demand``.

    Pair ``(s, t)`` gets ``samples_per_unit * ceil(D_st)`` independent samples,
    each seeded only by ``(seed, sample index, s, t)``.
    """
    if samples_per_unit < 1:
        raise ValueError("need at least one sample per unit")
    demand = clean_demand(demand)
    g = router.G
    idx = g.index_matrix
    items = sorted(demand.items())

    def one(item):
        (s, t), amount = item
        k = samples_for(amount, samples_per_unit)
        counts = np.zeros((k, g.m))
        top = 0
        drawn = []
        for j in range(k):
            p = sample_path(router, s, t, seed_sequence(seed, j))
            drawn.append(p)
            top = max(top, hop(p))
            if len(p) > 1:
                np.add.at(counts[j], idx[np.array(p[:-1]), np.array(p[1:])], 1.0)
        mean = counts.mean(axis=0)
        var = counts.var(axis=0, ddof=1) / k if k > 1 else np.zeros(g.m)
        return amount * mean, amount ** 2 * var, top, k, drawn

    flow = np.zeros(g.m)
    var = np.zeros(g.m)
    top = total = 0
    kept = {} if keep_paths else None
    for (pair, _), (f, v, hp, k, drawn) in zip(items, _map(one, items)):
        if keep_paths:
            kept[pair] = drawn
        flow += f
        var += v
        top = max(top, hp)
        total += k
    se = np.sqrt(var)
    cong = congestion(flow, g)
    cong_se = 0.0
    if g.m and cong > 0:
        e = int(np.argmax(flow / g.capacities))
        cong_se = float(se[e] / g.capacities[e])
    return RouteReport(flow, se, cong, cong_se, top, total, len(items), kept)


class IntegralRouting(list):
    """List of paths, one per request, with summary statistics."""

    congestion: float = 0.0
    max_hop: int = 0


def integral_route(router: ObliviousRouter, requests: Sequence[Tuple[int, int]], seed: Seed = 0) -> IntegralRouting:
    """One independently sampled path per request (request ``i`` uses key ``i``)."""
    items = list(enumerate(requests))
    paths = _map(lambda it: sample_path(router, it[1][0], it[1][1], seed_sequence(seed, it[0])), items)
    out = IntegralRouting(paths)
    g = router.G
    load = np.zeros(g.m)
    for p in out:
        for a, b in zip(p, p[1:]):
            load[g.eid(a, b)] += 1.0
    out.congestion = congestion(load, g)
    out.max_hop = max((hop(p) for p in out), default=0)
    return out


# --------------------------------------------------------------------------
# exact pair distribution


def exact_pair_distribution(router: ObliviousRouter, s: int, t: int) -> Tuple[Dict[Path, float], float]:
    """Exact law of :func:`sample_path` for ``(s, t)``.

    Returns ``(distribution over paths, failure probability)``; the failure
    mass is the chance that the cover trees leave no acceptable member of the
    second router, and the path law is conditioned on success.
    """
    _check_pair(router, s, t)
    T1, T2 = router.T1, router.T2
    inc2 = T2.inclusion
    good = [k for k in range(len(T2)) if inc2[k, s] and inc2[k, t] and router.f_route(k, s, t)[1]]
    cond = T1.inclusion[:, s] & T1.inclusion[:, t]
    if not cond.any():
        raise RetriesExhausted(f"no tree of the first router contains both {s} and {t}")
    p1 = np.where(cond, T1.probs, 0.0)
    p1 = p1 / p1.sum()
    # each first-router member maps to the bitmask of second-router members covering its route
    step: Dict[int, float] = {}
    for j in np.flatnonzero(cond):
        need = sorted(set(T1.embeddings[j].route(s, t)))
        mask = 0
        for k in good:
            if inc2[k, need].all():
                mask |= 1 << k
        step[mask] = step.get(mask, 0.0) + float(p1[j])
    full = 0
    for k in good:
        full |= 1 << k
    states = {full: 1.0}
    for _ in range(router.r):
        nxt: Dict[int, float] = {}
        for m, pm in states.items():
            for sm, ps in step.items():
                key = m & sm
                nxt[key] = nxt.get(key, 0.0) + pm * ps
        states = nxt
    fail = states.pop(0, 0.0)
    law: Dict[Path, float] = {}
    for m, pm in states.items():
        ks = [k for k in good if m >> k & 1]
        w = T2.probs[ks]
        w = w / w.sum()
        for k, q in zip(ks, w):
            p = router.f_route(k, s, t)[0]
            law[p] = law.get(p, 0.0) + pm * float(q)
    ok = 1.0 - fail
    if ok > 0:
        law = {p: q / ok for p, q in law.items()}
    return law, float(fail)


def expected_flow(router: ObliviousRouter, demand: Mapping[Tuple[int, int], float]) -> np.ndarray:
    g = router.G
    flow = np.zeros(g.m)
    for (s, t), amount in sorted(clean_demand(demand).items()):
        law, _ = exact_pair_distribution(router, s, t)
        for p, q in law.items():
            for a, b in zip(p, p[1:]):
                flow[g.eid(a, b)] += amount * q
    return flow


# --------------------------------------------------------------------------
# subflow diagnostics


def subflow_diagnostics(router: ObliviousRouter, demand: Mapping[Tuple[int, int], float],
                        witness: Mapping[Tuple[int, int], Sequence[Tuple[Path, float]]],
                        samples: int = 1000, seed: Seed = 0, r: Optional[int] = None) -> dict:
    """Empirical failure rates of the witness-cover event.

    A single trial draws a witness path ``P`` for the pair (by weight) and a
    tree ``T`` from the first router, and fails when some node of ``P`` is
    missing from ``T``.  A boosted trial repeats this ``r`` times
    independently and fails only if every repetition fails.
    """
    r = router.r if r is None else r
    T1 = router.T1
    excl_node = ~T1.inclusion
    out = {}
    for (s, t) in sorted(clean_demand(demand)):
        paths = witness.get((s, t)) or []
        if not paths:
            continue
        w = np.array([x for _, x in paths], dtype=float)
        w = w / w.sum()
        cum = np.cumsum(w)
        cum[-1] = 1.0
        fails_by_path = np.array([excl_node[:, sorted(set(p))].any(axis=1) for p, _ in paths])
        gamma_exact = float(w @ (fails_by_path.astype(float) @ T1.probs))
        rng = derive(seed, s, t)
        single = np.zeros(samples, dtype=bool)
        joint = np.ones(samples, dtype=bool)
        for i in range(samples):
            for rep in range(r):
                a = int(np.searchsorted(cum, rng.random(), side="right"))
                f = bool(fails_by_path[a, T1.draw(rng)])
                if rep == 0:
                    single[i] = f
                joint[i] &= f
        g_hat = float(single.mean())
        j_hat = float(joint.mean())
        longest = max(hop(p) for p, _ in paths)
        pred = g_hat ** r
        out[f"{s} {t}"] = {
            "gamma_hat": g_hat,
            "gamma_sigma": math.sqrt(max(g_hat * (1 - g_hat), 0.0) / samples),
            "gamma_exact": gamma_exact,
            "gamma_bound": (longest + 1) / (4 * router.h),
            "joint_hat": j_hat,
            "joint_pred": pred,
            "joint_sigma": math.sqrt(max(pred * (1 - pred), 0.0) / samples),
            "joint_exact": gamma_exact ** r,
            "r": r,
            "samples": samples,
        }
    return out


# --------------------------------------------------------------------------
# serialization


def router_to_dict(router: ObliviousRouter) -> dict:
    g = router.G
    return {
        "format": "hoproute-router/1",
        "graph": {"n": g.n, "edges": [[u, v, c] for (u, v), c in zip(g.edges, g.capacities.tolist())]},
        "h": router.h,
        "r": router.r,
        "eps1": router.eps1,
        "eps2": router.eps2,
        "hop_cap": router.hop_cap,
        "retry_cap": router.retry_cap,
        "params": asdict(router.params),
        "T1": _dist_dict(router.T1),
        "T2": _dist_dict(router.T2),
    }


def _dist_dict(dist: EmbeddingDistribution) -> dict:
    d = dist.to_dict()
    for e in d["entries"]:
        e.pop("host_weights", None)
    return d


def router_from_dict(d: Mapping) -> ObliviousRouter:
    g = CapacitatedGraph.from_edges(d["graph"]["n"], [tuple(e) for e in d["graph"]["edges"]])
    params = RouterParams(**d["params"])
    H = complete_graph(g, params.C)
    T1 = EmbeddingDistribution.from_dict(d["T1"])
    T2 = EmbeddingDistribution.from_dict(d["T2"])
    return ObliviousRouter(g, H, T1, T2, d["h"], d["r"], d["eps1"], d["eps2"], d["hop_cap"], d["retry_cap"], params)


def save_router(router: ObliviousRouter, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(router_to_dict(router), fh, sort_keys=True)


def load_router(path) -> ObliviousRouter:
    with open(path, encoding="utf-8") as fh:
        return router_from_dict(json.load(fh))


def check_emitted(router: ObliviousRouter, p: Path) -> List[str]:
    """Problems with an emitted path: hop cap, simplicity, real edges."""
    problems = []
    if hop(p) > router.hop_cap:
        problems.append(f"{hop(p)} hops > cap {router.hop_cap}")
    if not is_simple(p):
        problems.append("not simple")
    if any(not router.G.has_edge(a, b) for a, b in zip(p, p[1:])):
        problems.append("uses an edge outside the input graph")
    return problems
