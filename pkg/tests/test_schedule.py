import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hoproute.errors import UnknownEdge
from hoproute.graph import CapacitatedGraph, hop
from hoproute.schedule import path_set_congestion, random_delay_schedule, schedule_report

from conftest import unit_graph


def cycle(n):
    return unit_graph(n, [(i, (i + 1) % n) for i in range(n)])


def test_single_packet():
    g = unit_graph(5, [(i, i + 1) for i in range(4)])
    s = random_delay_schedule([(0, 1, 2, 3, 4)], g, seed=3)
    assert s.delays == [0] and s.completion == 4
    assert schedule_report(s)["ratio"] == pytest.approx(4 / 5)


def test_shared_edge_serializes():
    g = unit_graph(2, [(0, 1)])
    for seed in range(10):
        s = random_delay_schedule([(0, 1)] * 5, g, seed=seed)
        assert s.congestion == 5 and s.completion >= 5
        assert all(sum(step.values()) <= 1 for step in s.trace)


def test_opposite_directions_share_budget():
    g = unit_graph(2, [(0, 1)])
    s = random_delay_schedule([(0, 1), (1, 0)], g, seed=0)
    assert s.completion >= 2


def test_disjoint_paths_finish_at_dilation():
    g = cycle(8)
    paths = [(i, (i + 1) % 8) for i in range(8)]
    s = random_delay_schedule(paths, g, seed=1)
    assert s.congestion == 1 and s.completion == s.dilation == 1


def test_empty_and_trivial():
    g = cycle(4)
    s = random_delay_schedule([], g)
    assert s.completion == 0 and schedule_report(s)["ratio"] == 0.0
    s = random_delay_schedule([(2,)], g)
    assert s.completion == 0 and s.arrivals == [0]


def test_capacity_below_one_rejected():
    g = CapacitatedGraph(2, [(0, 1)], [0.5])
    with pytest.raises(ValueError):
        random_delay_schedule([(0, 1)], g)


def test_bad_path_rejected():
    with pytest.raises(UnknownEdge):
        random_delay_schedule([(0, 2)], cycle(4))


def test_fractional_capacity_floors():
    g = CapacitatedGraph(2, [(0, 1)], [2.7])
    assert path_set_congestion([(0, 1)] * 4, g) == 2.0


@st.composite
def instances(draw):
    n = draw(st.integers(3, 7))
    caps = draw(st.lists(st.sampled_from([1.0, 1.5, 2.0, 3.0]), min_size=n, max_size=n))
    g = CapacitatedGraph(n, [(i, (i + 1) % n) for i in range(n)], caps)
    k = draw(st.integers(1, 10))
    paths = []
    for _ in range(k):
        start = draw(st.integers(0, n - 1))
        length = draw(st.integers(0, n - 1))
        step = draw(st.sampled_from([1, -1]))
        paths.append(tuple((start + step * i) % n for i in range(length + 1)))
    return g, paths, draw(st.integers(0, 10**6))


@settings(max_examples=60, deadline=None)
@given(instances())
def test_schedule_properties(inst):
    g, paths, seed = inst
    s = random_delay_schedule(paths, g, seed=seed)
    C, D = s.congestion, s.dilation
    assert s.completion >= max(math.ceil(C), D)
    assert all(0 <= d < max(1, math.ceil(C)) for d in s.delays)
    budget = np.floor(g.capacities)
    for step in s.trace:
        for e, k in step.items():
            assert k <= budget[e]
    moves = sum(sum(step.values()) for step in s.trace)
    assert moves == sum(hop(p) for p in paths)
    for p, d, a in zip(s.paths, s.delays, s.arrivals):
        assert a >= (d + hop(p) if hop(p) else d)
    assert s.completion == max(s.arrivals)
    again = random_delay_schedule(paths, g, seed=seed)
    assert again.arrivals == s.arrivals
