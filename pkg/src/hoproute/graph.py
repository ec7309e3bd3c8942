"""Capacitated and weighted undirected graphs, paths, flows and demands.

Edges are stored as canonical ``(min id, max id)`` pairs in a fixed order, and
every flow vector is a numpy array aligned with that order.  Paths are plain
tuples of node ids.
"""

from __future__ import annotations

import math
from functools import cached_property
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import AspectRatioError, DegenerateGraph, GraphFormatError, UnknownEdge

Edge = Tuple[int, int]
Path = Tuple[int, ...]
Demand = Dict[Tuple[int, int], float]

DEFAULT_ASPECT_EXPONENT = 16


def canonical(u: int, v: int) -> Edge:
    return (u, v) if u < v else (v, u)


def hop(p: Sequence[int]) -> int:
    return len(p) - 1


class _EdgeIndexed:
    """Shared node/edge bookkeeping for the two graph flavours."""

    def __init__(self, n: int, edges: Sequence[Edge]):
        if n < 0:
            raise GraphFormatError("node count must be nonnegative")
        self.n = int(n)
        self.edges: List[Edge] = [canonical(int(u), int(v)) for u, v in edges]
        self.edge_index: Dict[Edge, int] = {}
        for i, (u, v) in enumerate(self.edges):
            if u == v:
                raise GraphFormatError(f"self-loop at node {u}")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise GraphFormatError(f"edge {(u, v)} references a node outside [0, {self.n})")
            if (u, v) in self.edge_index:
                raise GraphFormatError(f"duplicate edge {(u, v)}")
            self.edge_index[(u, v)] = i

    @property
    def m(self) -> int:
        return len(self.edges)

    def has_edge(self, u: int, v: int) -> bool:
        return canonical(u, v) in self.edge_index

    def eid(self, u: int, v: int) -> int:
        try:
            return self.edge_index[canonical(u, v)]
        except KeyError:
            raise UnknownEdge(f"no edge between {u} and {v}") from None

    @cached_property
    def index_matrix(self) -> np.ndarray:
        """``n x n`` matrix of edge ids, ``-1`` where there is no edge."""
        idx = np.full((self.n, self.n), -1, dtype=np.int64)
        for i, (u, v) in enumerate(self.edges):
            idx[u, v] = i
            idx[v, u] = i
        idx.setflags(write=False)
        return idx

    @cached_property
    def adjacency(self) -> List[List[int]]:
        adj: List[List[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        for row in adj:
            row.sort()
        return adj

    def is_complete(self) -> bool:
        return self.m == self.n * (self.n - 1) // 2

    def _dense(self, values: np.ndarray, fill: float) -> np.ndarray:
        mat = np.full((self.n, self.n), fill, dtype=float)
        if self.m:
            us = np.array([e[0] for e in self.edges])
            vs = np.array([e[1] for e in self.edges])
            mat[us, vs] = values
            mat[vs, us] = values
        return mat


class CapacitatedGraph(_EdgeIndexed):
    """Undirected graph with positive edge capacities.

    ``virtual`` marks edges added by :func:`complete_graph`; they are real
    edges of the completed graph but not of the original input.
    """

    def __init__(
        self,
        n: int,
        edges: Sequence[Edge],
        capacities: Optional[Sequence[float]] = None,
        virtual: Optional[Sequence[bool]] = None,
        aspect_exponent: float = DEFAULT_ASPECT_EXPONENT,
    ):
        super().__init__(n, edges)
        if capacities is None:
            capacities = np.ones(self.m)
        caps = np.asarray(capacities, dtype=float).copy()
        if caps.shape != (self.m,):
            raise GraphFormatError("need exactly one capacity per edge")
        if self.m and (not np.all(np.isfinite(caps)) or np.any(caps <= 0)):
            raise GraphFormatError("capacities must be finite and positive")
        self.capacities = caps
        self.capacities.setflags(write=False)
        virt = np.zeros(self.m, dtype=bool) if virtual is None else np.asarray(virtual, dtype=bool).copy()
        if virt.shape != (self.m,):
            raise GraphFormatError("virtual mask must match the edge count")
        self.virtual = virt
        self.virtual.setflags(write=False)
        self.aspect_ratio = 1.0
        if self.m:
            self.aspect_ratio = float(max(1.0, caps.max(), 1.0 / caps.min()))
        bound = max(self.n, 2) ** aspect_exponent
        if self.aspect_ratio > bound:
            raise AspectRatioError(
                f"aspect ratio {self.aspect_ratio:g} exceeds n^{aspect_exponent} = {bound:g}"
            )

    @classmethod
    def from_edges(cls, n: int, triples: Iterable[Tuple[int, int, float]], **kwargs) -> "CapacitatedGraph":
        """Build a graph from ``(u, v, c)`` triples, merging parallel edges by summing."""
        merged: Dict[Edge, float] = {}
        for u, v, c in triples:
            c = float(c)
            if not math.isfinite(c) or c <= 0:
                raise GraphFormatError(f"bad capacity {c!r} on edge {(u, v)}")
            if u == v:
                raise GraphFormatError(f"self-loop at node {u}")
            key = canonical(int(u), int(v))
            merged[key] = merged.get(key, 0.0) + c
        edges = sorted(merged)
        return cls(n, edges, [merged[e] for e in edges], **kwargs)

    @property
    def real_mask(self) -> np.ndarray:
        return ~self.virtual

    def capacity(self, u: int, v: int) -> float:
        return float(self.capacities[self.eid(u, v)])

    @cached_property
    def capacity_matrix(self) -> np.ndarray:
        """Dense symmetric capacity matrix, zero where there is no edge."""
        mat = self._dense(self.capacities, 0.0)
        mat.setflags(write=False)
        return mat

    def real_subgraph(self) -> "CapacitatedGraph":
        keep = np.flatnonzero(~self.virtual)
        return CapacitatedGraph(self.n, [self.edges[i] for i in keep], self.capacities[keep])

    def __repr__(self) -> str:
        return f"CapacitatedGraph(n={self.n}, m={self.m}, virtual={int(self.virtual.sum())})"


class WeightedGraph(_EdgeIndexed):
    """Undirected graph with positive edge weights (lengths)."""

    def __init__(self, n: int, edges: Sequence[Edge], weights: Optional[Sequence[float]] = None):
        super().__init__(n, edges)
        w = np.ones(self.m) if weights is None else np.asarray(weights, dtype=float).copy()
        if w.shape != (self.m,):
            raise GraphFormatError("need exactly one weight per edge")
        if self.m and (not np.all(np.isfinite(w)) or np.any(w <= 0)):
            raise GraphFormatError("weights must be finite and positive")
        self.weights = w
        self.weights.setflags(write=False)

    @classmethod
    def unit(cls, g: _EdgeIndexed) -> "WeightedGraph":
        return cls(g.n, g.edges, np.ones(g.m))

    @cached_property
    def weight_matrix(self) -> np.ndarray:
        """Dense symmetric weights with ``inf`` off the edge set and 0 on the diagonal."""
        mat = self._dense(self.weights, math.inf)
        np.fill_diagonal(mat, 0.0)
        mat.setflags(write=False)
        return mat

    def path_weight(self, p: Sequence[int]) -> float:
        return float(sum(self.weights[self.eid(a, b)] for a, b in zip(p, p[1:])))

    def __repr__(self) -> str:
        return f"WeightedGraph(n={self.n}, m={self.m})"


# --------------------------------------------------------------------------
# paths and flows


def check_path(p: Sequence[int], g: _EdgeIndexed) -> None:
    if len(p) == 0:
        raise ValueError("a path has at least one node")
    for a, b in zip(p, p[1:]):
        if not g.has_edge(a, b):
            raise UnknownEdge(f"no edge between {a} and {b}")


def path_flow(p: Sequence[int], g: _EdgeIndexed) -> np.ndarray:
    """Per-edge traversal counts of ``p`` (repeats counted)."""
    f = np.zeros(g.m)
    for a, b in zip(p, p[1:]):
        f[g.eid(a, b)] += 1.0
    return f


def path_edge_ids(p: Sequence[int], g: _EdgeIndexed) -> List[int]:
    return [g.eid(a, b) for a, b in zip(p, p[1:])]


def congestion(f: np.ndarray, g: CapacitatedGraph) -> float:
    """Maximum ratio of flow over capacity; 0 for the zero flow."""
    f = np.asarray(f, dtype=float)
    if f.shape != (g.m,):
        raise ValueError(f"flow has shape {f.shape}, graph has {g.m} edges")
    if g.m == 0:
        return 0.0
    return float(np.max(f / g.capacities, initial=0.0))


def simplify_path(p: Sequence[int]) -> Path:
    """Remove cycles by cutting back to the first occurrence of each repeated node."""
    out: List[int] = []
    pos: Dict[int, int] = {}
    for v in p:
        if v in pos:
            k = pos[v]
            for w in out[k + 1:]:
                del pos[w]
            del out[k + 1:]
        else:
            pos[v] = len(out)
            out.append(v)
    return tuple(out)


def is_simple(p: Sequence[int]) -> bool:
    return len(set(p)) == len(p)


# --------------------------------------------------------------------------
# hop-constrained distances


def hop_distance(g: WeightedGraph, u: int, v: int, h: int) -> float:
    """Minimum weight of a ``u``-``v`` path with at most ``h`` hops (``inf`` if none)."""
    if h < 0:
        raise ValueError("hop bound must be nonnegative")
    if u == v:
        return 0.0
    return float(hop_distances_from(g, u, h)[v])


def hop_distances_from(g: WeightedGraph, source: int, h: int) -> np.ndarray:
    w = g.weight_matrix
    d = np.full(g.n, math.inf)
    d[source] = 0.0
    for _ in range(min(h, max(g.n - 1, 0))):
        nd = np.minimum(d, np.min(d[:, None] + w, axis=0))
        if np.array_equal(nd, d):
            break
        d = nd
    return d


class HopBoundedPaths:
    """All-pairs ``k``-hop-bounded shortest paths on a dense weight matrix.

    Layer ``j`` of the DP holds the best weight with at most ``j`` hops;
    ``choice[j, s, v]`` is the predecessor of ``v`` if layer ``j`` improved on
    layer ``j - 1``, else ``-1``.
    """

    def __init__(self, w: np.ndarray, k: int):
        n = w.shape[0]
        self.n = n
        k = max(0, min(int(k), n - 1))
        d = np.full((n, n), math.inf)
        np.fill_diagonal(d, 0.0)
        choices = [np.full((n, n), -1, dtype=np.int32)]
        offdiag = w.copy()
        np.fill_diagonal(offdiag, math.inf)
        for _ in range(k):
            # cand[s, x, v] = d[s, x] + w[x, v]
            cand = d[:, :, None] + offdiag[None, :, :]
            arg = np.argmin(cand, axis=1)
            best = np.take_along_axis(cand, arg[:, None, :], axis=1)[:, 0, :]
            better = (best < d * (1 - 1e-15)) & np.isfinite(best)
            choice = np.where(better, arg, -1).astype(np.int32)
            if not better.any():
                break
            d = np.where(better, best, d)
            choices.append(choice)
        self.k = len(choices) - 1
        self.dist = d
        self.choice = np.stack(choices)

    def path(self, s: int, v: int) -> Path:
        if not math.isfinite(self.dist[s, v]):
            raise ValueError(f"no path between {s} and {v} within {self.k} hops")
        rev = [v]
        j = self.k
        while v != s:
            x = int(self.choice[j, s, v])
            j -= 1
            if x < 0:
                continue
            rev.append(x)
            v = x
        return tuple(reversed(rev))


def unit_hop_distances(g: _EdgeIndexed, source: int) -> List[float]:
    """BFS hop counts from ``source``; ``inf`` for unreachable nodes."""
    dist = [math.inf] * g.n
    dist[source] = 0
    frontier = [source]
    adj = g.adjacency
    while frontier:
        nxt = []
        for x in frontier:
            for y in adj[x]:
                if dist[y] == math.inf:
                    dist[y] = dist[x] + 1
                    nxt.append(y)
        frontier = nxt
    return dist


def hop_diameter(g: _EdgeIndexed) -> float:
    return max((max(unit_hop_distances(g, s)) for s in range(g.n)), default=0)


def is_connected(g: _EdgeIndexed) -> bool:
    return g.n == 0 or all(math.isfinite(x) for x in unit_hop_distances(g, 0))


# --------------------------------------------------------------------------
# demands and completion


def clean_demand(d: Mapping[Tuple[int, int], float]) -> Demand:
    out: Demand = {}
    for (s, t), x in d.items():
        x = float(x)
        if not math.isfinite(x) or x < 0:
            raise GraphFormatError(f"bad demand {x!r} for pair {(s, t)}")
        if x > 0:
            out[(int(s), int(t))] = out.get((int(s), int(t)), 0.0) + x
    return out


def d1_demand(g: CapacitatedGraph) -> Demand:
    """One unit per unit of capacity across every edge, keyed by canonical pair."""
    return {e: float(c) for e, c in zip(g.edges, g.capacities)}


def complete_graph(g: CapacitatedGraph, C: int = 6) -> CapacitatedGraph:
    """Add every missing pair with capacity ``c_min * n**-C``, marked virtual."""
    if g.m == 0:
        raise DegenerateGraph("cannot complete a graph without edges")
    n = g.n
    c_small = float(g.capacities.min()) * float(n) ** (-C)
    edges, caps, virt = [], [], []
    for u in range(n):
        for v in range(u + 1, n):
            edges.append((u, v))
            i = g.edge_index.get((u, v))
            if i is None:
                caps.append(c_small)
                virt.append(True)
            else:
                caps.append(float(g.capacities[i]))
                virt.append(bool(g.virtual[i]))
    return CapacitatedGraph(n, edges, caps, virt, aspect_exponent=math.inf)


# --------------------------------------------------------------------------
# text formats


def _parse_numbers(line: str, lineno: int, kinds) -> tuple:
    parts = line.split()
    if len(parts) != len(kinds):
        raise GraphFormatError(f"line {lineno}: expected {len(kinds)} fields, got {len(parts)}")
    try:
        vals = tuple(k(p) for k, p in zip(kinds, parts))
    except ValueError as exc:
        raise GraphFormatError(f"line {lineno}: {exc}") from None
    for x in vals:
        if isinstance(x, float) and (math.isnan(x) or x < 0):
            raise GraphFormatError(f"line {lineno}: NaN or negative value")
        if isinstance(x, int) and x < 0:
            raise GraphFormatError(f"line {lineno}: negative node id")
    return vals


def _content_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def parse_graph(text: str) -> CapacitatedGraph:
    lines = list(_content_lines(text))
    if not lines:
        raise GraphFormatError("empty graph file")
    n, m = _parse_numbers(lines[0][1], lines[0][0], (int, int))
    body = lines[1:]
    if len(body) != m:
        raise GraphFormatError(f"header declares {m} edges, found {len(body)}")
    triples = []
    for lineno, line in body:
        u, v, c = _parse_numbers(line, lineno, (int, int, float))
        if u >= n or v >= n:
            raise GraphFormatError(f"line {lineno}: node id out of range")
        if c == 0:
            raise GraphFormatError(f"line {lineno}: zero capacity")
        triples.append((u, v, c))
    return CapacitatedGraph.from_edges(n, triples)


def format_graph(g: CapacitatedGraph) -> str:
    rows = [f"{g.n} {g.m}"]
    rows += [f"{u} {v} {c!r}" for (u, v), c in zip(g.edges, g.capacities.tolist())]
    return "\n".join(rows) + "\n"


def read_graph(path) -> CapacitatedGraph:
    with open(path, encoding="utf-8") as fh:
        return parse_graph(fh.read())


def write_graph(g: CapacitatedGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_graph(g))


def parse_demand(text: str, n: Optional[int] = None) -> Demand:
    out: Demand = {}
    for lineno, line in _content_lines(text):
        s, t, x = _parse_numbers(line, lineno, (int, int, float))
        if n is not None and (s >= n or t >= n):
            raise GraphFormatError(f"line {lineno}: node id out of range")
        if x > 0:
            out[(s, t)] = out.get((s, t), 0.0) + x
    return out


def format_demand(d: Mapping[Tuple[int, int], float]) -> str:
    return "".join(f"{s} {t} {x!r}\n" for (s, t), x in sorted(d.items()))


def read_demand(path, n: Optional[int] = None) -> Demand:
    with open(path, encoding="utf-8") as fh:
        return parse_demand(fh.read(), n)


def write_demand(d: Mapping[Tuple[int, int], float], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_demand(d))
