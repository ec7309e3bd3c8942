"""Exact optimal hop-constrained fractional routing.

:func:`opt_hop_routing` solves a min-congestion multicommodity flow in a
time-expanded graph whose layer ``i`` holds the nodes reached after ``i``
hops, so every unit of flow travels at most ``h`` hops.  Commodities sharing
a source are merged, since any path decomposition of a single-source flow
splits back into per-target paths.  :func:`brute_force_opt` cross-checks it by
enumerating explicit paths and solving with a small dense simplex.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Hashable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import SolverFailure, TooLarge
from .graph import CapacitatedGraph, Path, clean_demand, congestion, path_flow, simplify_path, unit_hop_distances

GAP_TOL = 1e-6
FLOW_EPS = 1e-12


@dataclass
class OptResult:
    value: float
    witness: Dict[Tuple[int, int], List[Tuple[Path, float]]] = field(default_factory=dict)
    dual: Optional[np.ndarray] = None
    lower_bound: float = 0.0
    h: Optional[int] = None

    def witness_flow(self, g: CapacitatedGraph) -> np.ndarray:
        f = np.zeros(g.m)
        for paths in self.witness.values():
            for p, w in paths:
                f += w * path_flow(p, g)
        return f

    def to_dict(self, g: CapacitatedGraph) -> dict:
        return {
            "h": self.h,
            "value": self.value if math.isfinite(self.value) else "inf",
            "lower_bound": self.lower_bound if math.isfinite(self.lower_bound) else "inf",
            "witness": [
                {"s": s, "t": t, "paths": [{"path": list(p), "weight": w} for p, w in paths]}
                for (s, t), paths in sorted(self.witness.items())
            ],
            "dual": None if self.dual is None else {
                f"{u} {v}": float(y) for (u, v), y in zip(g.edges, self.dual) if y > 0
            },
        }


# --------------------------------------------------------------------------
# layered LP


def _unreachable(g: CapacitatedGraph, demand: Mapping, h: Optional[int]) -> bool:
    hops = {}
    for s, t in demand:
        if s not in hops:
            hops[s] = unit_hop_distances(g, s)
        d = hops[s][t]
        if not math.isfinite(d) or (h is not None and d > h):
            return True
    return False


def opt_hop_routing(g: CapacitatedGraph, demand: Mapping[Tuple[int, int], float], h: Optional[int]) -> OptResult:
    """Minimum congestion of routing ``demand`` on paths of at most ``h`` hops.

    ``h=None`` drops the hop constraint.  The result carries a per-pair path
    decomposition and edge prices whose hop-constrained distances certify the
    value from below.
    """
    if h is not None and h < 1:
        raise ValueError("hop bound must be at least 1")
    demand = {k: v for k, v in clean_demand(demand).items() if k[0] != k[1]}
    if not demand:
        return OptResult(0.0, {}, np.zeros(g.m), 0.0, h)
    if _unreachable(g, demand, h):
        return OptResult(math.inf, {}, None, math.inf, h)
    hh = h if h is not None else max(g.n - 1, 1)
    lp = _LayeredLP(g, demand, hh)
    value, flows, dual = lp.solve()
    witness = {}
    for s, arcs in flows.items():
        witness.update(_decompose(s, arcs, {t: x for (a, t), x in demand.items() if a == s}))
    lb = certified_lower_bound(g, demand, dual, hh)
    if value > 0 and abs(value - lb) > GAP_TOL * max(1.0, value):
        raise SolverFailure(f"duality gap too large: primal {value!r}, dual {lb!r}")
    return OptResult(value, witness, dual, lb, h)


class _LayeredLP:
    def __init__(self, g: CapacitatedGraph, demand: Dict[Tuple[int, int], float], h: int):
        self.g, self.h = g, h
        by_source: Dict[int, Dict[int, float]] = defaultdict(dict)
        for (s, t), x in sorted(demand.items()):
            by_source[s][t] = x
        self.by_source = dict(by_source)
        arcs = []
        for u, v in g.edges:
            arcs.append((u, v))
            arcs.append((v, u))
        self.arcs = arcs

    def solve(self):
        g, h = self.g, self.h
        dist = {v: unit_hop_distances(g, v) for v in range(g.n)}
        # variable 0 is lambda; then flow variables, then sink variables
        cols: List[tuple] = []
        for s, targets in self.by_source.items():
            ds = dist[s]
            to_t = [min(dist[t][x] for t in targets) for x in range(g.n)]
            for i in range(h):
                for u, v in self.arcs:
                    if ds[u] <= i and to_t[v] <= h - i - 1:
                        cols.append(("f", s, i, u, v))
            for t in targets:
                for i in range(1, h + 1):
                    if ds[t] <= i:
                        cols.append(("y", s, i, t))
        index = {c: j + 1 for j, c in enumerate(cols)}
        nvar = len(cols) + 1
        # equality rows: conservation at every (s, node, layer) + per-target sink totals
        eq_rows, eq_cols, eq_vals, b_eq = [], [], [], []
        rowid: Dict[tuple, int] = {}

        def row(key):
            r = rowid.get(key)
            if r is None:
                r = rowid[key] = len(b_eq)
                b_eq.append(0.0)
            return r

        for c, j in index.items():
            if c[0] == "f":
                _, s, i, u, v = c
                # leaves (u, i), enters (v, i + 1)
                eq_rows += [row((s, u, i)), row((s, v, i + 1))]
                eq_cols += [j, j]
                eq_vals += [1.0, -1.0]
            else:
                _, s, i, t = c
                eq_rows += [row((s, t, i)), row(("sink", s, t))]
                eq_cols += [j, j]
                eq_vals += [1.0, 1.0]
        for s, targets in self.by_source.items():
            b_eq[row((s, s, 0))] = sum(targets.values())
            for t, x in targets.items():
                b_eq[row(("sink", s, t))] = x
        A_eq = sp.csr_matrix((eq_vals, (eq_rows, eq_cols)), shape=(len(b_eq), nvar))
        # capacity rows: sum of flow on e minus lambda * c_e <= 0
        ub_rows, ub_cols, ub_vals = [], [], []
        for c, j in index.items():
            if c[0] == "f":
                ub_rows.append(g.eid(c[3], c[4]))
                ub_cols.append(j)
                ub_vals.append(1.0)
        for e in range(g.m):
            ub_rows.append(e)
            ub_cols.append(0)
            ub_vals.append(-float(g.capacities[e]))
        A_ub = sp.csr_matrix((ub_vals, (ub_rows, ub_cols)), shape=(g.m, nvar))
        cost = np.zeros(nvar)
        cost[0] = 1.0
        res = linprog(cost, A_ub=A_ub, b_ub=np.zeros(g.m), A_eq=A_eq, b_eq=np.array(b_eq),
                      bounds=(0, None), method="highs")
        if res.status != 0:
            raise SolverFailure(f"LP solver failed: {res.message}")
        x = res.x
        flows: Dict[int, Dict[tuple, float]] = defaultdict(dict)
        for c, j in index.items():
            if x[j] > FLOW_EPS:
                if c[0] == "f":
                    _, s, i, u, v = c
                    flows[s][((u, i), (v, i + 1))] = float(x[j])
                else:
                    _, s, i, t = c
                    flows[s][((t, i), ("sink", t))] = float(x[j])
        dual = np.maximum(-np.asarray(res.ineqlin.marginals), 0.0)
        return float(x[0]), dict(flows), dual


def _decompose(s: int, arcs: Dict[tuple, float], targets: Dict[int, float]) -> Dict[Tuple[int, int], List[Tuple[Path, float]]]:
    """Split a single-source layered flow into paths, lexicographically."""
    out_arcs: Dict[Hashable, List[tuple]] = defaultdict(list)
    for (a, b) in arcs:
        out_arcs[a].append((a, b))

    def order(arc):
        b = arc[1]
        return (0, b[1]) if b[0] == "sink" else (1, b[0], b[1])

    for a in out_arcs:
        out_arcs[a].sort(key=order)
    rest = dict(arcs)
    paths: Dict[int, Dict[Path, float]] = defaultdict(dict)
    start = (s, 0)
    total = sum(targets.values())
    budget = total
    while budget > FLOW_EPS * max(1.0, total):
        node, walk = start, []
        while not (isinstance(node[0], str)):
            nxt = next((a for a in out_arcs[node] if rest[a] > FLOW_EPS), None)
            if nxt is None:
                break
            walk.append(nxt)
            node = nxt[1]
        if not walk or not isinstance(node[0], str):
            break
        amt = min(rest[a] for a in walk)
        for a in walk:
            rest[a] -= amt
        t = node[1]
        p = simplify_path([a[0][0] for a in walk])
        paths[t][p] = paths[t].get(p, 0.0) + amt
        budget -= amt
    result = {}
    for t, x in targets.items():
        got = paths.get(t, {})
        tot = sum(got.values())
        if tot <= 0:
            raise SolverFailure(f"path decomposition lost commodity {(s, t)}")
        result[(s, t)] = [(p, w * x / tot) for p, w in sorted(got.items())]
    return result


def constrained_distances(g: CapacitatedGraph, prices: np.ndarray, source: int, h: int) -> np.ndarray:
    """``h``-hop distances from ``source`` under nonnegative edge prices (zeros allowed)."""
    w = np.full((g.n, g.n), math.inf)
    for (u, v), y in zip(g.edges, prices):
        w[u, v] = w[v, u] = y
    d = np.full(g.n, math.inf)
    d[source] = 0.0
    for _ in range(h):
        nd = np.minimum(d, np.min(d[:, None] + w, axis=0))
        if np.array_equal(nd, d):
            break
        d = nd
    return d


def certified_lower_bound(g: CapacitatedGraph, demand: Mapping[Tuple[int, int], float],
                          prices: Optional[np.ndarray], h: int) -> float:
    """``sum_st D_st d_y^(h)(s, t) / sum_e y_e c_e``; a lower bound on the optimum for any ``y >= 0``."""
    if prices is None:
        return 0.0
    y = np.maximum(np.asarray(prices, dtype=float), 0.0)
    norm = float(y @ g.capacities)
    if norm <= 0:
        return 0.0
    y = y / norm
    total = 0.0
    cache = {}
    for (s, t), x in demand.items():
        if s not in cache:
            cache[s] = constrained_distances(g, y, s, h)
        total += x * cache[s][t]
    return float(total)


# --------------------------------------------------------------------------
# brute force


PATH_LIMIT = 10_000


def simple_paths(g: CapacitatedGraph, s: int, t: int, h: int, limit: int = PATH_LIMIT) -> List[Path]:
    """All simple ``s``-``t`` paths with at most ``h`` hops, in lexicographic order."""
    adj = g.adjacency
    out: List[Path] = []
    stack = [s]
    on = {s}

    def walk(x):
        if x == t:
            out.append(tuple(stack))
            if len(out) > limit:
                raise TooLarge(f"more than {limit} paths between {s} and {t}")
            return
        if len(stack) - 1 >= h:
            return
        for y in adj[x]:
            if y not in on:
                on.add(y)
                stack.append(y)
                walk(y)
                stack.pop()
                on.discard(y)

    walk(s)
    return out


def brute_force_opt(g: CapacitatedGraph, demand: Mapping[Tuple[int, int], float], h: int) -> float:
    """Same optimum as :func:`opt_hop_routing`, via explicit path variables."""
    demand = {k: v for k, v in clean_demand(demand).items() if k[0] != k[1]}
    if not demand:
        return 0.0
    pairs = sorted(demand)
    paths = {}
    for s, t in pairs:
        ps = simple_paths(g, s, t, h)
        if not ps:
            return math.inf
        paths[(s, t)] = ps
    cols = [(k, p) for k in pairs for p in paths[k]]
    nv = 1 + len(cols)
    # rows: one per pair (equality), one per edge (with slack)
    m_eq, m_ub = len(pairs), g.m
    A = np.zeros((m_eq + m_ub, nv + m_ub))
    b = np.zeros(m_eq + m_ub)
    prow = {k: i for i, k in enumerate(pairs)}
    for j, (k, p) in enumerate(cols, start=1):
        A[prow[k], j] = 1.0
        for a, bb in zip(p, p[1:]):
            A[m_eq + g.eid(a, bb), j] += 1.0
    for k in pairs:
        b[prow[k]] = demand[k]
    for e in range(g.m):
        A[m_eq + e, 0] = -float(g.capacities[e])
        A[m_eq + e, nv + e] = 1.0
    c = np.zeros(nv + m_ub)
    c[0] = 1.0
    x, val = simplex(c, A, b)
    return float(val)


def simplex(c: np.ndarray, A: np.ndarray, b: np.ndarray, tol: float = 1e-10, max_iter: int = 100_000):
    """Minimize ``c @ x`` subject to ``A x = b, x >= 0`` by the two-phase tableau method.

    Bland's rule keeps it from cycling.  Raises :class:`SolverFailure` on
    infeasible or unbounded problems.
    """
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    c = np.asarray(c, dtype=float)
    m, n = A.shape
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    basis = list(range(n, n + m))
    # phase one: minimize the sum of artificials
    T[m, :n] = -A.sum(axis=0)
    T[m, -1] = -b.sum()
    _pivot_loop(T, basis, n + m, tol, max_iter)
    if -T[m, -1] > 1e-8 * max(1.0, b.sum()):
        raise SolverFailure("linear program is infeasible")
    # drive artificials out of the basis
    keep = []
    for i in range(m):
        if basis[i] >= n:
            j = next((j for j in range(n) if abs(T[i, j]) > tol), None)
            if j is None:
                continue
            _pivot(T, basis, i, j)
        keep.append(i)
    T = np.vstack([T[keep][:, list(range(n)) + [n + m]], np.zeros((1, n + 1))])
    basis = [basis[i] for i in keep]
    m2 = len(keep)
    T[m2, :n] = c
    for i, j in enumerate(basis):
        T[m2] -= c[j] * T[i]
    _pivot_loop(T, basis, n, tol, max_iter)
    x = np.zeros(n)
    for i, j in enumerate(basis):
        x[j] = T[i, -1]
    return x, float(c @ x)


def _pivot(T, basis, i, j):
    T[i] /= T[i, j]
    for r in range(T.shape[0]):
        if r != i and T[r, j] != 0:
            T[r] -= T[r, j] * T[i]
    basis[i] = j


def _pivot_loop(T, basis, ncols, tol, max_iter):
    m = T.shape[0] - 1
    for _ in range(max_iter):
        obj = T[m, :ncols]
        enter = next((j for j in range(ncols) if obj[j] < -tol), None)
        if enter is None:
            return
        col = T[:m, enter]
        best, leave = math.inf, None
        for i in range(m):
            if col[i] > tol:
                ratio = T[i, -1] / col[i]
                if ratio < best - tol or (abs(ratio - best) <= tol and basis[i] < basis[leave]):
                    best, leave = ratio, i
        if leave is None:
            raise SolverFailure("linear program is unbounded")
        _pivot(T, basis, leave, enter)
    raise SolverFailure("simplex iteration limit reached")


def witness_congestion(g: CapacitatedGraph, res: OptResult) -> float:
    return congestion(res.witness_flow(g), g)
