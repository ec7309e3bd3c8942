"""Partial tree embeddings, their validation, and a constructive sampler.

An embedding is a rooted tree on a subset of the host graph's nodes together
with a map sending each tree edge to a host path between its endpoints.  The
sampler builds dominating embeddings by hierarchical hop-bounded ball carving;
nodes that fall in a thin guard band at a cluster boundary are left out.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from ._rng import Seed, derive
from .errors import (
    BadDistribution,
    EmptyGraph,
    HopCapExceeded,
    InvalidEpsilon,
    InvalidTree,
    NodeNotEmbedded,
)
from .graph import (
    CapacitatedGraph,
    HopBoundedPaths,
    Path,
    WeightedGraph,
    _EdgeIndexed,
    canonical,
    congestion,
    hop,
    hop_distances_from,
    path_flow,
)

WEIGHT_TOL = 1e-9


class PartialTreeEmbedding:
    """Rooted weighted tree on ``nodes`` plus a host path for every tree edge.

    ``tree_edges`` holds ``(u, v, weight)`` triples and ``edge_map`` maps the
    canonical pair of each tree edge to a host path joining its endpoints (in
    either orientation).  Construction never fails on malformed trees; use
    :func:`validate_embedding` to list problems.  Routing on a malformed tree
    raises :class:`InvalidTree`.
    """

    def __init__(
        self,
        root: int,
        tree_edges: Sequence[Tuple[int, int, float]],
        edge_map: Mapping[Tuple[int, int], Sequence[int]],
        nodes: Optional[Iterable[int]] = None,
    ):
        self.root = int(root)
        self.tree_edges: List[Tuple[int, int, float]] = [(int(u), int(v), float(w)) for u, v, w in tree_edges]
        self.edge_map: Dict[Tuple[int, int], Path] = {
            canonical(*k): tuple(int(x) for x in p) for k, p in edge_map.items()
        }
        ns = {self.root}
        for u, v, _ in self.tree_edges:
            ns.update((u, v))
        if nodes is not None:
            ns.update(int(x) for x in nodes)
        self.nodes = frozenset(ns)
        self._problem: Optional[str] = None
        self._build()

    def _build(self) -> None:
        adj: Dict[int, List[Tuple[int, float]]] = {v: [] for v in self.nodes}
        for u, v, w in self.tree_edges:
            adj[u].append((v, w))
            adj[v].append((u, w))
        if len(self.tree_edges) != len(self.nodes) - 1:
            self._problem = f"{len(self.tree_edges)} tree edges for {len(self.nodes)} nodes"
        parent: Dict[int, Optional[int]] = {self.root: None}
        order = [self.root]
        for x in order:
            for y, _ in sorted(adj[x]):
                if y == parent[x]:
                    continue
                if y in parent:
                    self._problem = self._problem or f"cycle through node {y}"
                    continue
                parent[y] = x
                order.append(y)
        if len(order) != len(self.nodes):
            self._problem = self._problem or "tree is not connected"
        self.parent = parent
        self.order = order
        self.up: Dict[int, Path] = {}
        self.up_weight: Dict[int, float] = {}
        if self._problem is not None:
            return
        weights = {canonical(u, v): w for u, v, w in self.tree_edges}
        depth = {self.root: 0}
        hop_depth = {self.root: 0}
        wdepth = {self.root: 0.0}
        for x in order[1:]:
            p = parent[x]
            key = canonical(x, p)
            seg = self.edge_map.get(key)
            if seg is None or {seg[0], seg[-1]} != {x, p} or (x != p and len(seg) < 2):
                self._problem = f"edge map for {key} missing or has wrong endpoints"
                return
            if seg[0] != x:
                seg = seg[::-1]
            self.up[x] = seg
            self.up_weight[x] = weights[key]
            depth[x] = depth[p] + 1
            hop_depth[x] = hop_depth[p] + hop(seg)
            wdepth[x] = wdepth[p] + weights[key]
        self.depth = depth
        self.hop_depth = hop_depth
        self.weight_depth = wdepth

    @property
    def valid(self) -> bool:
        return self._problem is None

    def __contains__(self, v: int) -> bool:
        return v in self.nodes

    def _require(self) -> None:
        if self._problem is not None:
            raise InvalidTree(self._problem)

    def _climb(self, u: int, v: int):
        self._require()
        for x in (u, v):
            if x not in self.nodes:
                raise NodeNotEmbedded(f"node {x} is not in the tree")
        a, b = u, v
        left: List[int] = []
        right: List[int] = []
        depth, parent = self.depth, self.parent
        while depth[a] > depth[b]:
            left.append(a)
            a = parent[a]
        while depth[b] > depth[a]:
            right.append(b)
            b = parent[b]
        while a != b:
            left.append(a)
            right.append(b)
            a, b = parent[a], parent[b]
        return left, right, a

    def route(self, u: int, v: int) -> Path:
        """Concatenation of mapped host paths along the tree path ``u -> v``."""
        left, right, _ = self._climb(u, v)
        out = [u]
        for x in left:
            out.extend(self.up[x][1:])
        for x in reversed(right):
            out.extend(self.up[x][-2::-1])
        return tuple(out)

    def lca(self, u: int, v: int) -> int:
        return self._climb(u, v)[2]

    def tree_distance(self, u: int, v: int) -> float:
        a = self.lca(u, v)
        wd = self.weight_depth
        return wd[u] + wd[v] - 2 * wd[a]

    def route_hops(self, u: int, v: int) -> int:
        a = self.lca(u, v)
        hd = self.hop_depth
        return hd[u] + hd[v] - 2 * hd[a]

    def dilation(self) -> int:
        """Largest ``hop(route(u, v))`` over all pairs of tree nodes."""
        self._require()
        hd = self.hop_depth
        best = dict(hd)
        diam = 0
        children: Dict[int, List[int]] = {x: [] for x in self.order}
        for x in self.order[1:]:
            children[self.parent[x]].append(x)
        for x in reversed(self.order):
            cands = sorted([hd[x]] + [best[c] for c in children[x]], reverse=True)
            best[x] = cands[0]
            if len(cands) > 1:
                diam = max(diam, cands[0] + cands[1] - 2 * hd[x])
        return diam

    def children(self) -> Dict[int, List[int]]:
        self._require()
        ch: Dict[int, List[int]] = {x: [] for x in self.order}
        for x in self.order[1:]:
            ch[self.parent[x]].append(x)
        return ch

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "root": self.root,
            "nodes": sorted(self.nodes),
            "tree_edges": [[u, v, w] for u, v, w in self.tree_edges],
            "edge_map": [list(self.edge_map.get(canonical(u, v), ())) for u, v, _ in self.tree_edges],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PartialTreeEmbedding":
        edges = [tuple(e) for e in d["tree_edges"]]
        emap = {canonical(int(u), int(v)): tuple(p) for (u, v, _), p in zip(edges, d["edge_map"])}
        return cls(d["root"], edges, emap, d.get("nodes"))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def key(self) -> str:
        return self.dumps()

    def __repr__(self) -> str:
        return f"PartialTreeEmbedding(root={self.root}, nodes={len(self.nodes)})"


def tree_route(emb: PartialTreeEmbedding, u: int, v: int) -> Path:
    return emb.route(u, v)


# --------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str


def validate_embedding(emb: PartialTreeEmbedding, g: WeightedGraph, tol: float = WEIGHT_TOL) -> List[Violation]:
    """List every way ``emb`` fails to be a dominating partial tree embedding of ``g``."""
    out: List[Violation] = []
    for v in sorted(emb.nodes):
        if not 0 <= v < g.n:
            out.append(Violation("UnknownNode", f"tree node {v} is not a graph node"))
    if not emb.valid:
        out.append(Violation("NotATree", emb._problem or ""))
    for u, v, w in emb.tree_edges:
        key = canonical(u, v)
        if not w > 0:
            out.append(Violation("NonPositiveWeight", f"tree edge {key} has weight {w}"))
        p = emb.edge_map.get(key)
        if p is None:
            out.append(Violation("MissingEdgeMap", f"tree edge {key} has no host path"))
            continue
        if len(p) == 0 or {p[0], p[-1]} != {u, v}:
            out.append(Violation("EndpointMismatch", f"host path {p} does not join {u} and {v}"))
            continue
        missing = [(a, b) for a, b in zip(p, p[1:]) if not g.has_edge(a, b)]
        if missing:
            out.append(Violation("PathNotInGraph", f"host path for {key} uses non-edges {missing}"))
            continue
        pw = g.path_weight(p)
        if pw > w + tol:
            out.append(Violation("DominationViolation", f"host path weight {pw!r} > tree weight {w!r} on {key}"))
    return out


# --------------------------------------------------------------------------
# D1 routing load


def d1_load(emb: PartialTreeEmbedding, g: CapacitatedGraph) -> np.ndarray:
    """Flow from routing one unit per unit of capacity of every edge of ``g``
    whose endpoints are both in the tree, along the embedding's routes.

    Uses the fact that a concatenated route's flow is the sum of its tree
    edges' host-path flows, so each tree edge carries the total demand
    separated by it.
    """
    emb._require()
    order = emb.order
    if len(order) <= 1:
        return np.zeros(g.m)
    pos = {x: i for i, x in enumerate(order)}
    nodes = np.array(order)
    k = len(order)
    member = np.zeros((k, g.n))
    member[np.arange(k), nodes] = 1.0
    for x in reversed(order[1:]):
        member[pos[emb.parent[x]]] += member[pos[x]]
    incl = np.zeros(g.n)
    incl[nodes] = 1.0
    caps = g.capacity_matrix
    inside = member[1:]
    crossing = np.einsum("ij,ij->i", inside @ caps, incl[None, :] - inside)
    idx = g.index_matrix
    ids, amounts = [], []
    for i, x in enumerate(order[1:]):
        seg = emb.up[x]
        a = np.asarray(seg[:-1])
        b = np.asarray(seg[1:])
        eids = idx[a, b]
        if np.any(eids < 0):
            bad = [(int(p), int(q)) for p, q, e in zip(a, b, eids) if e < 0]
            from .errors import UnknownEdge

            raise UnknownEdge(f"host path of tree edge at {x} uses non-edges {bad}")
        ids.append(eids)
        amounts.append(np.full(len(eids), crossing[i]))
    load = np.zeros(g.m)
    np.add.at(load, np.concatenate(ids), np.concatenate(amounts))
    return load


# --------------------------------------------------------------------------
# distributions


class EmbeddingDistribution:
    """A finite distribution over partial tree embeddings of one host graph.

    ``host_weights`` optionally records, per entry, the weight vector of the
    host graph the entry was sampled against, so that domination can be
    re-checked later.
    """

    def __init__(
        self,
        entries: Sequence[Tuple[float, PartialTreeEmbedding]],
        n: int,
        annotations: Optional[dict] = None,
        host_weights: Optional[Sequence[Optional[np.ndarray]]] = None,
    ):
        if not entries:
            raise BadDistribution("a distribution needs at least one embedding")
        probs = np.array([float(p) for p, _ in entries])
        if np.any(~np.isfinite(probs)) or np.any(probs <= 0):
            raise BadDistribution("probabilities must be positive")
        if abs(probs.sum() - 1.0) > 1e-9:
            raise BadDistribution(f"probabilities sum to {probs.sum()!r}, not 1")
        self.n = int(n)
        self.probs = probs
        self.embeddings = [e for _, e in entries]
        self.annotations = dict(annotations or {})
        self.host_weights = list(host_weights) if host_weights is not None else [None] * len(entries)
        self.cumulative = np.cumsum(probs)
        self.cumulative[-1] = 1.0
        incl = np.zeros((len(entries), self.n), dtype=bool)
        for i, e in enumerate(self.embeddings):
            incl[i, sorted(e.nodes)] = True
        self.inclusion = incl

    def __len__(self) -> int:
        return len(self.embeddings)

    @classmethod
    def uniform(cls, embeddings: Sequence[PartialTreeEmbedding], n: int, **kwargs) -> "EmbeddingDistribution":
        """Uniform distribution over a multiset; duplicates are merged."""
        counts: Dict[str, int] = {}
        first: Dict[str, int] = {}
        for i, e in enumerate(embeddings):
            k = e.key()
            counts[k] = counts.get(k, 0) + 1
            first.setdefault(k, i)
        total = len(embeddings)
        keep = sorted(first.values())
        hw = kwargs.pop("host_weights", None)
        entries = [(counts[embeddings[i].key()] / total, embeddings[i]) for i in keep]
        if hw is not None:
            hw = [hw[i] for i in keep]
        return cls(entries, n, host_weights=hw, **kwargs)

    def draw(self, rng: np.random.Generator) -> int:
        return int(np.searchsorted(self.cumulative, rng.random(), side="right"))

    def exclusion_probabilities(self) -> np.ndarray:
        return self.probs @ (~self.inclusion)

    def dilation(self) -> int:
        return max(e.dilation() for e in self.embeddings)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "annotations": self.annotations,
            "entries": [
                {
                    "p": float(p),
                    "embedding": e.to_dict(),
                    "host_weights": None if w is None else [float(x) for x in w],
                }
                for p, e, w in zip(self.probs, self.embeddings, self.host_weights)
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EmbeddingDistribution":
        entries = [(e["p"], PartialTreeEmbedding.from_dict(e["embedding"])) for e in d["entries"]]
        hw = [None if e.get("host_weights") is None else np.array(e["host_weights"]) for e in d["entries"]]
        total = sum(p for p, _ in entries)
        entries = [(p / total, e) for p, e in entries]
        return cls(entries, d["n"], d.get("annotations"), hw)


# --------------------------------------------------------------------------
# surrogate sampler


def default_beta_cap(n: int, eps: float, c_beta: float = 1.0) -> int:
    return max(1, math.ceil(c_beta * math.log2(max(n, 2)) ** 3 / eps))


def default_edge_hops(n: int, h: int) -> int:
    return max(1, min(max(n - 1, 1), h * math.ceil(math.log2(max(n, 2)))))


class _Metric:
    """Hop-bounded distances with an unbounded fallback for unreachable pairs."""

    def __init__(self, g: WeightedGraph, k: int):
        w = g.weight_matrix
        self.bounded = HopBoundedPaths(w, k)
        dist = self.bounded.dist
        self.full = None
        if not np.all(np.isfinite(dist)) and self.bounded.k < g.n - 1:
            self.full = HopBoundedPaths(w, g.n - 1)
            dist = np.where(np.isfinite(dist), dist, self.full.dist)
        self.dist = dist

    def path(self, s: int, v: int) -> Path:
        if math.isfinite(self.bounded.dist[s, v]):
            return self.bounded.path(s, v)
        return self.full.path(s, v)


def sample_partial_embedding(
    g: WeightedGraph,
    h: int,
    eps: float,
    seed: Seed = None,
    *,
    protected: Iterable[int] = (),
    edge_hops: Optional[int] = None,
    c_beta: float = 1.0,
    beta_cap: Optional[int] = None,
    max_retries: int = 50,
    metric: Optional[_Metric] = None,
) -> PartialTreeEmbedding:
    """Sample a dominating partial tree embedding of ``g``.

    The root is a minimum-eccentricity node.  Clusters are carved top-down at
    geometric radii ``theta * 2**(i-1) * dmin`` from centres taken in a random
    order (a cluster's own centre first), using
    ``edge_hops``-hop-bounded distances.  A non-centre node whose distance to
    its new centre lies in the top ``g`` fraction of the radius at a level
    where its cluster splits is dropped from the tree, unless protected.  Each
    new centre hangs off its parent cluster's centre with weight equal to the
    parent radius, which dominates the host path between them.

    Every route in the result has at most ``beta_cap * h`` hops; samples that
    would break this are redrawn.
    """
    if not 0 < eps < 1 / 3:
        raise InvalidEpsilon(f"exclusion target must lie in (0, 1/3), got {eps}")
    if g.n == 0:
        raise EmptyGraph("cannot embed an empty graph")
    if h < 1:
        raise ValueError("hop bound must be at least 1")
    cap = (beta_cap if beta_cap is not None else default_beta_cap(g.n, eps, c_beta)) * h
    k = edge_hops if edge_hops is not None else default_edge_hops(g.n, h)
    if metric is None:
        metric = _Metric(g, k)
    protected = frozenset(int(x) for x in protected)
    for attempt in range(max_retries + 1):
        emb = _carve(g.n, metric, eps, derive(seed, attempt), protected)
        if emb.dilation() <= cap:
            return emb
    raise HopCapExceeded(f"no sample within {cap} hops after {max_retries} retries")


def _carve(n: int, metric: _Metric, eps: float, rng: np.random.Generator, protected) -> PartialTreeEmbedding:
    dist = metric.dist
    perm = rng.permutation(n)
    theta = rng.uniform(1.0, 2.0)
    first = int(perm[0])
    comp = [int(v) for v in perm if math.isfinite(dist[first, v])]
    # root at a minimum-eccentricity node of the component, ties by the random order
    ecc = dist[np.ix_(comp, comp)].max(axis=1)
    root = comp[int(np.argmin(ecc))]
    comp.remove(root)
    comp.insert(0, root)
    if len(comp) == 1:
        return PartialTreeEmbedding(root, [], {})
    sub = dist[np.ix_(comp, comp)]
    positive = sub[sub > 0]
    dmin, dmax = float(positive.min()), float(positive.max())
    top = max(1, math.ceil(math.log2(dmax / dmin)) + 1)
    band = eps / (4 * min(top, n - 1))

    def radius(i: int) -> float:
        return theta * 2.0 ** (i - 1) * dmin

    tree_edges: List[Tuple[int, int, float]] = []
    edge_map: Dict[Tuple[int, int], Path] = {}
    excluded = set()
    stack = [(root, np.array(comp), top)]
    while stack:
        c, members, level = stack.pop()
        if len(members) == 1:
            continue
        far = float(dist[c, members].max())
        # highest level below the current one whose radius no longer covers the cluster
        i = min(level - 1, math.ceil(math.log2(far / (theta * dmin))))
        while i >= 0 and radius(i) >= far:
            i -= 1
        r_child, r_parent = radius(i), radius(i + 1)
        unassigned = np.ones(len(members), dtype=bool)
        children = []
        for j, u in enumerate(members):
            if not unassigned[j]:
                continue
            ball = unassigned & (dist[u, members] <= r_child)
            unassigned &= ~ball
            children.append((int(u), ball))
        kids = []
        for u, ball in children:
            inner = members[ball]
            if len(children) > 1:
                d_u = dist[u, inner]
                drop = (d_u > (1.0 - band) * r_child) & (inner != u)
                if protected:
                    drop &= ~np.isin(inner, list(protected))
                excluded.update(int(x) for x in inner[drop])
                inner = inner[~drop]
            if u != c:
                tree_edges.append((u, c, r_parent))
                edge_map[canonical(u, c)] = metric.path(c, u)[::-1]
            kids.append((u, inner, i))
        stack.extend(reversed(kids))
    return PartialTreeEmbedding(root, tree_edges, edge_map, nodes=[v for v in comp if v not in excluded])


# --------------------------------------------------------------------------
# measurement


def measure_distribution(
    source: Union[EmbeddingDistribution, Callable[[int], PartialTreeEmbedding]],
    g: CapacitatedGraph,
    h: int,
    num_samples: int,
    seed: Seed = 0,
    weighted: Optional[WeightedGraph] = None,
) -> dict:
    """Empirical hop stretch, per-node exclusion, D1 congestion and distance stretch.

    ``source`` is a finite distribution (sampled from) or a callable mapping a
    sample index to a fresh embedding.  Distance stretch is measured against
    ``h``-hop distances in ``weighted`` (unit weights on ``g`` by default).
    """
    if num_samples < 1:
        raise ValueError("need at least one sample")
    if isinstance(source, EmbeddingDistribution):
        rng = derive(seed)
        draw = lambda i: source.embeddings[source.draw(rng)]  # noqa: E731
    else:
        draw = source
    weighted = weighted or WeightedGraph.unit(g)
    n = g.n
    ref = np.vstack([hop_distances_from(weighted, s, h) for s in range(n)]) if n else np.zeros((0, 0))
    max_hops = 0
    missing = np.zeros(n)
    load = np.zeros(g.m)
    tree_dist = np.zeros((n, n))
    for i in range(num_samples):
        emb = draw(i)
        max_hops = max(max_hops, emb.dilation())
        inside = np.zeros(n, dtype=bool)
        inside[sorted(emb.nodes)] = True
        missing += ~inside
        load += d1_load(emb, g)
        tree_dist += _tree_distance_matrix(emb, n)
    load /= num_samples
    tree_dist /= num_samples
    stretch = {}
    for u in range(n):
        for v in range(u + 1, n):
            if math.isfinite(ref[u, v]) and ref[u, v] > 0:
                stretch[(u, v)] = float(tree_dist[u, v] / ref[u, v])
    return {
        "samples": num_samples,
        "beta_emp": max_hops / h,
        "max_hops": max_hops,
        "eps_emp": (missing / num_samples).tolist(),
        "alpha_emp": congestion(load, g),
        "stretch_emp": stretch,
    }


def _tree_distance_matrix(emb: PartialTreeEmbedding, n: int) -> np.ndarray:
    """``d_T(u, v)`` for tree nodes, zero for pairs involving excluded nodes."""
    out = np.zeros((n, n))
    nodes = sorted(emb.nodes)
    for a, u in enumerate(nodes):
        for v in nodes[a + 1:]:
            out[u, v] = out[v, u] = emb.tree_distance(u, v)
    return out


def edge_flows(emb: PartialTreeEmbedding, g: _EdgeIndexed) -> Dict[Tuple[int, int], np.ndarray]:
    """``path_flow(route(u, v))`` for every ordered pair of tree nodes."""
    nodes = sorted(emb.nodes)
    return {(u, v): path_flow(emb.route(u, v), g) for u in nodes for v in nodes}
