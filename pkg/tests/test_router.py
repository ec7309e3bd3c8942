import json

import numpy as np
import pytest

from hoproute.errors import NodePairInvalid, RetriesExhausted
from hoproute.graph import hop, path_flow
from hoproute.harness import gen_lower_bound_family
from hoproute.router import (
    RouterParams,
    build_router,
    check_emitted,
    exact_pair_distribution,
    expected_flow,
    integral_route,
    load_router,
    route_demand,
    router_to_dict,
    sample_path,
    sample_path_trace,
    save_router,
    subflow_diagnostics,
)
from hoproute.opt import opt_hop_routing

from conftest import unit_graph

FAST = RouterParams(max_rounds=16)


@pytest.fixture(scope="module")
def edge_router():
    return build_router(unit_graph(2, [(0, 1)]), 1, FAST, seed=0)


@pytest.fixture(scope="module")
def path_router():
    return build_router(unit_graph(3, [(0, 1), (1, 2)]), 2, FAST, seed=0)


@pytest.fixture(scope="module")
def c4_router():
    return build_router(unit_graph(4, [(0, 1), (1, 2), (2, 3), (3, 0)]), 2, FAST, seed=0)


@pytest.fixture(scope="module")
def lb_router():
    g, _ = gen_lower_bound_family(4)
    return build_router(g, 2, FAST, seed=0)


def test_params():
    r = build_router(unit_graph(4, [(0, 1), (1, 2), (2, 3), (3, 0)]), 2, FAST, seed=1)
    assert r.r == 4 and r.eps1 == pytest.approx(1 / 8)
    assert r.eps2 == pytest.approx(1 / (2 * r.r * r.T1.dilation()))
    assert r.hop_cap == r.T2.dilation()
    with pytest.raises(ValueError):
        build_router(unit_graph(2, [(0, 1)]), 0)


def test_single_edge_always_edge(edge_router):
    for seed in range(50):
        assert sample_path(edge_router, 0, 1, seed) == (0, 1)
        assert sample_path(edge_router, 1, 0, seed) == (1, 0)


def test_path_graph_is_forced(path_router):
    assert {sample_path(path_router, 0, 2, seed) for seed in range(500)} == {(0, 1, 2)}


def test_lower_bound_paths_are_real_and_capped(lb_router):
    g = lb_router.G
    for seed in range(200):
        p = sample_path(lb_router, 0, 3, seed)
        assert p[0] == 0 and p[-1] == 3
        assert check_emitted(lb_router, p) == []
        assert all(g.has_edge(a, b) for a, b in zip(p, p[1:]))


def test_bad_pairs(c4_router):
    with pytest.raises(NodePairInvalid):
        sample_path(c4_router, 1, 1)
    with pytest.raises(NodePairInvalid):
        sample_path(c4_router, 0, 9)


def test_disconnected_pair_exhausts():
    r = build_router(unit_graph(4, [(0, 1), (2, 3)]), 2, FAST, seed=0)
    with pytest.raises(RetriesExhausted):
        sample_path(r, 0, 2)
    assert sample_path(r, 0, 1) == (0, 1)


# -- conditioning ------------------------------------------------------------

def test_trace_conditioning(c4_router):
    for seed in range(100):
        tr = sample_path_trace(c4_router, 0, 2, seed)
        assert len(tr.covers) == c4_router.r
        for j in tr.covers:
            emb = c4_router.T1.embeddings[j]
            assert 0 in emb and 2 in emb
        F = c4_router.T2.embeddings[tr.f_index]
        assert tr.cover_nodes <= set(F.nodes)
        assert tr.path == c4_router.f_route(tr.f_index, 0, 2)[0]


# -- fractional routing ------------------------------------------------------

def test_route_zero_demand(c4_router):
    rep = route_demand(c4_router, {(0, 2): 0.0})
    assert rep.samples == 0 and not rep.flow.any() and rep.congestion == 0


def test_route_single_edge_amount(edge_router):
    rep = route_demand(edge_router, {(0, 1): 3.0}, samples_per_unit=4)
    assert rep.flow.tolist() == [3.0] and rep.samples == 12 and rep.max_hop == 1
    assert rep.stderr.tolist() == [0.0]


def test_monte_carlo_matches_exact(c4_router):
    demand = {(0, 2): 1.0, (1, 3): 2.0}
    exact = expected_flow(c4_router, demand)
    rep = route_demand(c4_router, demand, samples_per_unit=400, seed=3)
    assert np.all(np.abs(rep.flow - exact) <= 3 * rep.stderr + 1e-9)
    # every route needs at least two hops
    assert exact.sum() >= 3 * 2 - 1e-9


def test_exact_distribution_c4(c4_router):
    law, fail = exact_pair_distribution(c4_router, 0, 2)
    assert fail == pytest.approx(0.0)
    assert law == {(0, 1, 2): pytest.approx(0.5), (0, 3, 2): pytest.approx(0.5)}


def test_route_cost_not_below_unrestricted_optimum(c4_router):
    demand = {(0, 2): 1.0, (1, 3): 1.0}
    rep = route_demand(c4_router, demand, samples_per_unit=200, seed=1)
    best = opt_hop_routing(c4_router.G, demand, None).value
    assert rep.congestion >= best - 3 * rep.congestion_stderr - 1e-9


def test_route_deterministic_and_oblivious(c4_router):
    a = route_demand(c4_router, {(0, 2): 1.0}, samples_per_unit=20, seed=7, keep_paths=True)
    b = route_demand(c4_router, {(0, 2): 1.0, (1, 3): 5.0}, samples_per_unit=20, seed=7, keep_paths=True)
    c = route_demand(c4_router, {(0, 2): 1.0}, samples_per_unit=20, seed=7, keep_paths=True)
    assert a.paths[(0, 2)] == b.paths[(0, 2)] == c.paths[(0, 2)]
    assert np.array_equal(a.flow, c.flow)


def test_route_threads_match(c4_router, monkeypatch):
    demand = {(0, 2): 1.0, (1, 3): 2.0, (0, 1): 1.0}
    a = route_demand(c4_router, demand, samples_per_unit=10, seed=2)
    monkeypatch.setenv("HOPROUTE_THREADS", "3")
    b = route_demand(c4_router, demand, samples_per_unit=10, seed=2)
    assert np.array_equal(a.flow, b.flow)


# -- integral routing --------------------------------------------------------

def test_integral_empty(c4_router):
    out = integral_route(c4_router, [])
    assert list(out) == [] and out.congestion == 0


def test_integral_repeated_requests(edge_router):
    out = integral_route(edge_router, [(0, 1)] * 5, seed=1)
    assert list(out) == [(0, 1)] * 5 and out.congestion == 5 and out.max_hop == 1


def test_integral_load_matches_paths(c4_router):
    req = [(0, 2), (1, 3), (2, 0), (3, 1)]
    out = integral_route(c4_router, req, seed=4)
    load = sum(path_flow(p, c4_router.G) for p in out)
    assert out.congestion == pytest.approx(load.max())
    assert integral_route(c4_router, req, seed=4) == out


# -- subflow diagnostics ----------------------------------------------------

def test_subflow_single_edge(edge_router):
    res = subflow_diagnostics(edge_router, {(0, 1): 1.0}, {(0, 1): [((0, 1), 1.0)]}, samples=200)
    d = res["0 1"]
    assert d["gamma_hat"] == d["gamma_exact"] == 0.0 and d["joint_hat"] == 0.0


def test_subflow_against_exact(c4_router):
    demand = {(0, 2): 1.0}
    wit = opt_hop_routing(c4_router.G, demand, 2).witness
    d = subflow_diagnostics(c4_router, demand, wit, samples=2000, seed=5)["0 2"]
    sigma = np.sqrt(d["gamma_exact"] * (1 - d["gamma_exact"]) / 2000)
    assert abs(d["gamma_hat"] - d["gamma_exact"]) <= 4 * sigma + 1e-9
    assert d["r"] == c4_router.r and d["gamma_bound"] == pytest.approx(3 / 8)


# -- serialization -----------------------------------------------------------

def test_save_load_roundtrip(c4_router, tmp_path):
    f = tmp_path / "router.json"
    save_router(c4_router, f)
    back = load_router(f)
    assert json.dumps(router_to_dict(back), sort_keys=True) == f.read_text()
    for seed in range(30):
        assert sample_path(back, 0, 2, seed) == sample_path(c4_router, 0, 2, seed)


def test_router_build_deterministic():
    g = unit_graph(5, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)])
    a = build_router(g, 2, FAST, seed=11)
    b = build_router(g, 2, FAST, seed=11)
    assert router_to_dict(a) == router_to_dict(b)


def test_hop_cap_respected_on_corpus(corpus_routers):
    router = corpus_routers[("grid4x4", 2)]
    for seed in range(40):
        p = sample_path(router, 0, 15, seed)
        assert hop(p) <= router.hop_cap and check_emitted(router, p) == []
