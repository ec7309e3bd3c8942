import math

import pytest

from hoproute import CapacitatedGraph, RouterParams, build_router, gen_standard

# acceptance criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE = {}

CORPUS = {
    "grid4x4": ("grid", {"rows": 4, "cols": 4}),
    "cycle16": ("cycle", {"n": 16}),
    "hypercube4": ("hypercube", {"d": 4}),
    "rr16_3": ("random_regular", {"n": 16, "d": 3}),
}
CORPUS_H = (2, 4, 8)


def unit_graph(n, edges):
    return CapacitatedGraph.from_edges(n, [(u, v, 1.0) for u, v in edges])


@pytest.fixture
def c4():
    return unit_graph(4, [(0, 1), (1, 2), (2, 3), (3, 0)])


@pytest.fixture
def single_edge():
    return unit_graph(2, [(0, 1)])


@pytest.fixture
def path3():
    return unit_graph(3, [(0, 1), (1, 2)])


@pytest.fixture(scope="session")
def corpus_graphs():
    return {name: gen_standard(fam, params, seed=0) for name, (fam, params) in CORPUS.items()}


@pytest.fixture(scope="session")
def corpus_routers(corpus_graphs):
    out = {}
    for name, g in corpus_graphs.items():
        for h in CORPUS_H:
            out[(name, h)] = build_router(g, h, RouterParams(), seed=0)
    return out


@pytest.fixture(scope="session")
def big_router():
    """One 64-node router with a shortened price loop."""
    g = gen_standard("grid", {"rows": 8, "cols": 8})
    return build_router(g, 8, RouterParams(max_rounds=24), seed=0)


@pytest.fixture(scope="session")
def grid_router_h6(corpus_graphs):
    return build_router(corpus_graphs["grid4x4"], 6, RouterParams(), seed=0)


def binomial_sigma(p, n):
    return math.sqrt(max(p * (1 - p), 0.0) / n)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
