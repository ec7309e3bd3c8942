"""Random-delays packet scheduling on fixed routes.

Every packet waits a uniform random number of steps in ``[0, ceil(C))``,
where ``C`` is the congestion of the path set, then advances one hop per
step.  An edge carries at most ``floor(c_e)`` packets per step (both
directions together); packets that do not fit wait in place, lower packet
ids first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from ._rng import Seed, derive
from .graph import CapacitatedGraph, Path, check_path, hop


@dataclass
class Schedule:
    paths: List[Path]
    delays: List[int]
    arrivals: List[int]
    completion: int
    congestion: float
    dilation: int
    trace: List[Dict[int, int]] = field(default_factory=list)

    def to_dict(self, g: CapacitatedGraph) -> dict:
        return {
            "delays": self.delays,
            "arrivals": self.arrivals,
            "report": schedule_report(self),
            "trace": [{f"{g.edges[e][0]} {g.edges[e][1]}": k for e, k in sorted(step.items())} for step in self.trace],
        }


def path_set_congestion(paths: Sequence[Path], g: CapacitatedGraph) -> float:
    """``max_e (packets crossing e) / floor(c_e)``."""
    count = np.zeros(g.m)
    for p in paths:
        for a, b in zip(p, p[1:]):
            count[g.eid(a, b)] += 1
    used = count > 0
    if not used.any():
        return 0.0
    budget = np.floor(g.capacities[used])
    if np.any(budget < 1):
        raise ValueError("every used edge needs capacity at least 1")
    return float(np.max(count[used] / budget))


def random_delay_schedule(paths: Sequence[Sequence[int]], g: CapacitatedGraph, seed: Seed = 0,
                          keep_trace: bool = True) -> Schedule:
    paths = [tuple(int(x) for x in p) for p in paths]
    for p in paths:
        check_path(p, g)
    cong = path_set_congestion(paths, g)
    span = max(1, math.ceil(cong))
    rng = derive(seed)
    delays = [int(x) for x in rng.integers(0, span, size=len(paths))]
    budget = np.floor(g.capacities).astype(np.int64)
    eids = [[g.eid(a, b) for a, b in zip(p, p[1:])] for p in paths]
    pos = [0] * len(paths)
    arrivals = [d if not e else -1 for d, e in zip(delays, eids)]
    active = [i for i, e in enumerate(eids) if e]
    trace: List[Dict[int, int]] = []
    t = 0
    while active:
        used: Dict[int, int] = {}
        moved = []
        for i in active:
            # packet i may start moving during step delays[i]
            if t < delays[i]:
                continue
            e = eids[i][pos[i]]
            if used.get(e, 0) < budget[e]:
                used[e] = used.get(e, 0) + 1
                moved.append(i)
        for i in moved:
            pos[i] += 1
            if pos[i] == len(eids[i]):
                arrivals[i] = t + 1
        active = [i for i in active if pos[i] < len(eids[i])]
        if keep_trace:
            trace.append(used)
        t += 1
    completion = max(arrivals, default=0)
    dilation = max((hop(p) for p in paths), default=0)
    return Schedule(paths, delays, arrivals, completion, cong, dilation, trace)


def schedule_report(schedule: Schedule) -> dict:
    C, D = schedule.congestion, schedule.dilation
    total = C + D
    return {
        "completion": schedule.completion,
        "congestion": C,
        "dilation": D,
        "ratio": schedule.completion / total if total > 0 else 0.0,
    }
