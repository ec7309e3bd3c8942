"""Multiplicative-weights construction of D1-routers.

Prices ``ell`` on the edges of a (complete) capacitated graph play the role of
dual variables.  Each round samples a partial tree embedding of the graph
reweighted by the current prices, measures how hard it loads every edge when
routing the one-unit-per-capacity demand, and raises the prices of the loaded
edges.  The router is the uniform mixture of the sampled embeddings.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np

from ._rng import Seed, seed_sequence
from .embedding import (
    EmbeddingDistribution,
    PartialTreeEmbedding,
    _Metric,
    d1_load,
    default_beta_cap,
    default_edge_hops,
    sample_partial_embedding,
)
from .errors import BadDistribution, InvalidEpsilon, NoConvergence
from .graph import CapacitatedGraph, WeightedGraph, congestion

log = logging.getLogger(__name__)


@dataclass
class MwuConfig:
    """Knobs of the price loop.

    ``target`` is either a number or ``"auto"``; with ``"auto"`` every round is
    run and the target becomes four times the best congestion of a single-round
    embedding that contains every node.
    ``mix`` blends each price update with the uniform vector so no price ever
    reaches zero.
    """

    h: int
    eps: float
    eta: float = 0.2
    max_rounds: Optional[int] = None
    target: Union[float, str] = "auto"
    C: int = 6
    mix: float = 1e-3
    candidates: int = 1
    workers: int = 1
    edge_hops: Optional[int] = None
    c_beta: float = 1.0
    repair_rounds: Optional[int] = None

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise ValueError("step size must lie in (0, 1]")
        if self.max_rounds is not None and self.max_rounds < 1:
            raise ValueError("need at least one round")
        if not 0 < self.eps < 1 / 3:
            raise InvalidEpsilon(f"exclusion target must lie in (0, 1/3), got {self.eps}")
        if self.h < 1:
            raise ValueError("hop bound must be at least 1")
        if self.target != "auto" and not float(self.target) > 0:
            raise ValueError("target congestion must be positive or 'auto'")
        if self.candidates < 1:
            raise ValueError("need at least one candidate per round")

    def rounds_for(self, n: int) -> int:
        if self.max_rounds is not None:
            return self.max_rounds
        return 64 * max(1, math.ceil(math.log2(max(n, 2))))

    def to_dict(self) -> dict:
        return asdict(self)


def reweighted_graph(g: CapacitatedGraph, ell: Sequence[float], C: int) -> WeightedGraph:
    ell = np.asarray(ell, dtype=float)
    if ell.shape != (g.m,):
        raise BadDistribution(f"price vector has shape {ell.shape}, graph has {g.m} edges")
    if np.any(~np.isfinite(ell)) or np.any(ell < 0):
        raise BadDistribution("prices must be finite and nonnegative")
    if abs(ell.sum() - 1.0) > 1e-9:
        raise BadDistribution(f"prices sum to {ell.sum()!r}, not 1")
    floor = float(max(g.n, 2)) ** (-C - 2)
    return WeightedGraph(g.n, g.edges, ell / g.capacities + floor)


def mwu_update(ell: np.ndarray, load: np.ndarray, eta: float, mix: float = 0.0) -> np.ndarray:
    """One multiplicative step on relative loads, renormalized, then mixed with uniform."""
    peak = float(load.max()) if load.size else 0.0
    if peak > 0:
        step = eta * (load / peak)
        new = ell * np.exp(step - step.max())
    else:
        new = ell.copy()
    new /= new.sum()
    if mix:
        new = (1.0 - mix) * new + mix / len(new)
        new /= new.sum()
    return new


def route_d1_congestion(dist: EmbeddingDistribution, g: CapacitatedGraph) -> float:
    """Exact congestion of routing the D1 demand of ``g`` through ``dist``."""
    return congestion(expected_d1_load(dist, g), g)


def expected_d1_load(dist: EmbeddingDistribution, g: CapacitatedGraph) -> np.ndarray:
    total = np.zeros(g.m)
    for p, emb in zip(dist.probs, dist.embeddings):
        total += p * d1_load(emb, g)
    return total


@dataclass
class _Round:
    emb: PartialTreeEmbedding
    load: np.ndarray
    weights: np.ndarray


@dataclass
class BuildStats:
    rounds: int = 0
    repair_samples: int = 0
    best_single: float = math.inf
    history: List[float] = field(default_factory=list)


def _sample_round(g, ell, cfg: MwuConfig, seed, key, protected=()) -> _Round:
    w = reweighted_graph(g, ell, cfg.C)
    k = cfg.edge_hops if cfg.edge_hops is not None else default_edge_hops(g.n, cfg.h)
    metric = _Metric(w, k)

    def one(j: int) -> _Round:
        emb = sample_partial_embedding(
            w, cfg.h, cfg.eps, seed_sequence(seed, *key, j),
            protected=protected, edge_hops=k, c_beta=cfg.c_beta, metric=metric,
        )
        return _Round(emb, d1_load(emb, g), w.weights)

    if cfg.candidates == 1:
        return one(0)
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            cands = list(pool.map(one, range(cfg.candidates)))
    else:
        cands = [one(j) for j in range(cfg.candidates)]
    # lowest congestion wins, earliest index on ties
    return min(cands, key=lambda r: congestion(r.load, g))


def build_d1_router(g: CapacitatedGraph, cfg: MwuConfig, seed: Seed = 0) -> EmbeddingDistribution:
    """Run the price loop on ``g`` and return the mixture of sampled embeddings.

    After the loop, nodes whose exclusion frequency in the mixture exceeds
    ``cfg.eps`` are repaired by extra samples that keep those nodes in the
    tree.  The result carries annotations ``dilation``, ``exclusion``,
    ``alpha``, ``alpha_target``, ``converged``, ``beta_cap`` and the config.
    """
    n = g.n
    rounds = cfg.rounds_for(n)
    ell = np.full(g.m, 1.0 / g.m) if g.m else np.zeros(0)
    samples: List[_Round] = []
    total = np.zeros(g.m)
    stats = BuildStats()
    numeric = cfg.target != "auto"
    target = float(cfg.target) if numeric else math.inf
    for t in range(rounds):
        rd = _sample_round(g, ell, cfg, seed, (0, t))
        samples.append(rd)
        total += rd.load
        # only embeddings containing every node count towards the automatic target
        if len(rd.emb.nodes) == n:
            stats.best_single = min(stats.best_single, congestion(rd.load, g))
        running = congestion(total / len(samples), g)
        stats.history.append(running)
        stats.rounds = t + 1
        if numeric and running <= target:
            break
        if g.m:
            ell = mwu_update(ell, rd.load / g.capacities, cfg.eta, cfg.mix)

    # exclusion repair
    cap_repair = cfg.repair_rounds if cfg.repair_rounds is not None else 4 * rounds
    incl = np.zeros(n)
    for rd in samples:
        incl[sorted(rd.emb.nodes)] += 1
    while True:
        excl = 1.0 - incl / len(samples)
        bad = [int(v) for v in np.flatnonzero(excl > cfg.eps + 1e-12)]
        if not bad or stats.repair_samples >= cap_repair:
            break
        rd = _sample_round(g, ell, cfg, seed, (1, stats.repair_samples), protected=bad)
        samples.append(rd)
        total += rd.load
        incl[sorted(rd.emb.nodes)] += 1
        stats.repair_samples += 1

    if not numeric:
        if not math.isfinite(stats.best_single):
            stats.best_single = min(congestion(rd.load, g) for rd in samples)
        target = 4.0 * stats.best_single
    dist = EmbeddingDistribution.uniform(
        [rd.emb for rd in samples], n, host_weights=[rd.weights for rd in samples]
    )
    alpha = route_d1_congestion(dist, g)
    converged = alpha <= target * (1 + 1e-9)
    if not converged:
        warnings.warn(
            f"price loop stopped after {stats.rounds} rounds at congestion {alpha:.4g} > target {target:.4g}",
            NoConvergence,
            stacklevel=2,
        )
    excl = dist.exclusion_probabilities()
    dist.annotations.update(
        {
            "dilation": dist.dilation(),
            "beta_cap": default_beta_cap(n, cfg.eps, cfg.c_beta),
            "exclusion": float(excl.max()) if n else 0.0,
            "eps": cfg.eps,
            "alpha": alpha,
            "alpha_target": target,
            "converged": bool(converged),
            "rounds": stats.rounds,
            "repair_samples": stats.repair_samples,
            "best_single": stats.best_single,
            "config": cfg.to_dict(),
        }
    )
    log.debug("D1 router: %d rounds, %d repairs, alpha %.4g", stats.rounds, stats.repair_samples, alpha)
    return dist
