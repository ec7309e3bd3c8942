"""Oblivious routing with hop bounds on capacitated graphs."""

from .d1_router import MwuConfig, build_d1_router, reweighted_graph, route_d1_congestion
from .embedding import (
    EmbeddingDistribution,
    PartialTreeEmbedding,
    Violation,
    d1_load,
    measure_distribution,
    sample_partial_embedding,
    tree_route,
    validate_embedding,
)
from .errors import *  # noqa: F401,F403
from .graph import (
    CapacitatedGraph,
    WeightedGraph,
    complete_graph,
    congestion,
    d1_demand,
    hop,
    hop_distance,
    path_flow,
    read_demand,
    read_graph,
    simplify_path,
    write_demand,
    write_graph,
)
from .harness import ExperimentSpec, gen_lower_bound_family, gen_standard, make_demand, run_experiment
from .opt import OptResult, brute_force_opt, opt_hop_routing
from .router import (
    ObliviousRouter,
    RouterParams,
    build_router,
    exact_pair_distribution,
    integral_route,
    load_router,
    route_demand,
    sample_path,
    save_router,
    subflow_diagnostics,
)
from .schedule import Schedule, random_delay_schedule, schedule_report

__version__ = "0.1.0"
