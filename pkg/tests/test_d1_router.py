import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hoproute.d1_router import (
    MwuConfig,
    build_d1_router,
    expected_d1_load,
    mwu_update,
    reweighted_graph,
    route_d1_congestion,
)
from hoproute.embedding import (
    EmbeddingDistribution,
    PartialTreeEmbedding,
    d1_load,
    measure_distribution,
    validate_embedding,
)
from hoproute.errors import BadDistribution, InvalidEpsilon, NoConvergence
from hoproute.graph import CapacitatedGraph, WeightedGraph, complete_graph, congestion, path_flow

from conftest import binomial_sigma, unit_graph


def brute_d1_congestion(dist, g):
    total = np.zeros(g.m)
    for p, emb in zip(dist.probs, dist.embeddings):
        for (u, v), c in zip(g.edges, g.capacities):
            if u in emb and v in emb:
                total += p * c * path_flow(emb.route(u, v), g)
    return float(np.max(total / g.capacities))


# -- reweighted_graph --------------------------------------------------------

def test_reweight_uniform(c4):
    w = reweighted_graph(c4, np.full(4, 0.25), C=2)
    assert np.allclose(w.weights, 0.25 + 4.0 ** -4)


def test_reweight_concentrated():
    g = CapacitatedGraph(3, [(0, 1), (1, 2)], [2.0, 1.0])
    w = reweighted_graph(g, [1.0, 0.0], C=1)
    assert np.allclose(w.weights, [0.5 + 3.0 ** -3, 3.0 ** -3])


def test_reweight_three_edges():
    g = CapacitatedGraph(3, [(0, 1), (1, 2), (0, 2)], [1.0, 1.0, 2.0])
    w = reweighted_graph(g, [0.5, 0.3, 0.2], C=2)
    assert np.allclose(w.weights, np.array([0.5, 0.3, 0.1]) + 3.0 ** -4)


@pytest.mark.parametrize("ell", [[0.5, 0.6, -0.1, 0.0], [0.2, 0.2, 0.2, 0.2], [1.0, 0.0, 0.0], [np.nan, 1, 0, 0]])
def test_reweight_rejects(c4, ell):
    with pytest.raises(BadDistribution):
        reweighted_graph(c4, ell, C=2)


@given(st.lists(st.floats(0, 50), min_size=2, max_size=12), st.floats(0.01, 1), st.sampled_from([0.0, 1e-3, 0.1]))
def test_mwu_update_keeps_a_distribution(load, eta, mix):
    m = len(load)
    rng = np.random.default_rng(m)
    ell = rng.random(m) + 1e-3
    ell /= ell.sum()
    new = mwu_update(ell, np.array(load), eta, mix)
    assert np.all(new >= 0)
    assert new.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(new >= mix / m * (1 - 1e-9))


# -- config ------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(InvalidEpsilon):
        MwuConfig(h=2, eps=0.4)
    with pytest.raises(ValueError):
        MwuConfig(h=2, eps=0.1, eta=0)
    with pytest.raises(ValueError):
        MwuConfig(h=2, eps=0.1, max_rounds=0)
    with pytest.raises(ValueError):
        MwuConfig(h=0, eps=0.1)
    assert MwuConfig(h=2, eps=0.1).rounds_for(16) == 256


# -- route_d1_congestion -----------------------------------------------------

def test_route_d1_single_edge(single_edge):
    emb = PartialTreeEmbedding(0, [(0, 1, 1.0)], {(0, 1): (0, 1)})
    assert route_d1_congestion(EmbeddingDistribution([(1.0, emb)], 2), single_edge) == 1.0


def test_route_d1_excluded_node():
    g = unit_graph(3, [(0, 1), (1, 2), (0, 2)])
    emb = PartialTreeEmbedding(0, [(0, 1, 1.0)], {(0, 1): (0, 1)})
    dist = EmbeddingDistribution([(1.0, emb)], 3)
    load = expected_d1_load(dist, g)
    assert load[g.eid(1, 2)] == 0 and load[g.eid(0, 2)] == 0
    assert route_d1_congestion(dist, g) == 1.0


def test_route_d1_triangle_star():
    g = unit_graph(3, [(0, 1), (1, 2), (0, 2)])
    emb = PartialTreeEmbedding(0, [(0, 1, 1.0), (0, 2, 1.0)], {(0, 1): (0, 1), (0, 2): (0, 2)})
    dist = EmbeddingDistribution([(1.0, emb)], 3)
    # demand 1-2 is carried over 1-0-2, so edges at the root carry 2
    assert route_d1_congestion(dist, g) == 2.0 == brute_d1_congestion(dist, g)


# -- build_d1_router ---------------------------------------------------------

def test_build_single_edge(single_edge):
    dist = build_d1_router(single_edge, MwuConfig(h=1, eps=0.25, max_rounds=10), 0)
    # members differ only in root and weight; every one routes over the edge
    assert {tuple(sorted(e.route(0, 1))) for e in dist.embeddings} == {(0, 1)}
    assert route_d1_congestion(dist, single_edge) == pytest.approx(1.0)


@pytest.fixture(scope="module")
def c4_router():
    H = complete_graph(unit_graph(4, [(0, 1), (1, 2), (2, 3), (3, 0)]))
    return H, build_d1_router(H, MwuConfig(h=2, eps=0.125), 0)


def test_build_cycle_exclusion(c4_router):
    H, dist = c4_router
    rep = measure_distribution(dist, H, 2, 2000, seed=4)
    for x in rep["eps_emp"]:
        assert x <= 0.125 + 3 * binomial_sigma(0.125, 2000)
    alpha = route_d1_congestion(dist, H)
    assert np.isfinite(alpha) and alpha == pytest.approx(dist.annotations["alpha"])
    assert alpha == pytest.approx(brute_d1_congestion(dist, H), rel=1e-9)
    assert alpha <= dist.annotations["alpha_target"]


def test_measured_alpha_matches_exact(c4_router):
    H, dist = c4_router
    loads = np.array([d1_load(e, H) for e in dist.embeddings]) / H.capacities
    mean = dist.probs @ loads
    e = int(np.argmax(mean))
    sd = np.sqrt(dist.probs @ (loads[:, e] - mean[e]) ** 2)
    n = 3000
    rep = measure_distribution(dist, H, 2, n, seed=9)
    assert abs(rep["alpha_emp"] - route_d1_congestion(dist, H)) <= 4 * sd / np.sqrt(n) + 1e-9


def test_build_star_near_one():
    star = unit_graph(5, [(0, i) for i in range(1, 5)])
    H = complete_graph(star)
    dist = build_d1_router(H, MwuConfig(h=2, eps=0.125), 0)
    assert route_d1_congestion(dist, H) <= 2.0


def test_router_members_valid_and_capped(c4_router):
    H, dist = c4_router
    cap = dist.annotations["beta_cap"] * 2
    worst = 0
    for emb, w in zip(dist.embeddings, dist.host_weights):
        assert validate_embedding(emb, WeightedGraph(H.n, H.edges, w)) == []
        nodes = sorted(emb.nodes)
        worst = max([worst] + [len(emb.route(u, v)) - 1 for u in nodes for v in nodes])
    assert worst <= cap
    assert worst == dist.annotations["dilation"]


@settings(max_examples=20, deadline=None)
@given(st.data())
def test_sub_distribution_bounded_by_renormalization(c4_router, data):
    H, dist = c4_router
    k = len(dist)
    keep = data.draw(st.lists(st.integers(0, k - 1), min_size=1, max_size=k, unique=True))
    mass = dist.probs[keep].sum()
    sub = EmbeddingDistribution([(dist.probs[i] / mass, dist.embeddings[i]) for i in keep], dist.n)
    assert route_d1_congestion(sub, H) <= route_d1_congestion(dist, H) / mass * (1 + 1e-9)


def test_numeric_target_stops_early(c4_router):
    H, _ = c4_router
    dist = build_d1_router(H, MwuConfig(h=2, eps=0.125, target=100.0), 0)
    assert dist.annotations["rounds"] == 1 and dist.annotations["converged"]


def test_unreachable_target_warns(c4_router):
    H, _ = c4_router
    with pytest.warns(NoConvergence):
        dist = build_d1_router(H, MwuConfig(h=2, eps=0.125, target=0.01, max_rounds=5), 0)
    assert not dist.annotations["converged"]
    assert len(dist) >= 1


def test_build_deterministic_and_parallel_candidates(c4_router):
    H, _ = c4_router
    cfg = MwuConfig(h=2, eps=0.125, max_rounds=12, candidates=3)
    a = build_d1_router(H, cfg, 5)
    b = build_d1_router(H, MwuConfig(h=2, eps=0.125, max_rounds=12, candidates=3, workers=3), 5)
    assert [e.key() for e in a.embeddings] == [e.key() for e in b.embeddings]
    assert a.probs.tolist() == b.probs.tolist()


def test_repair_brings_exclusion_under_target():
    H = complete_graph(unit_graph(6, [(i, (i + 1) % 6) for i in range(6)]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NoConvergence)
        dist = build_d1_router(H, MwuConfig(h=2, eps=0.01, max_rounds=8), 3)
    assert np.all(dist.exclusion_probabilities() <= 0.01)
    assert congestion(expected_d1_load(dist, H), H) == pytest.approx(dist.annotations["alpha"])
