from .chimera import ChimeraGraph, build, hidden_subgraph, graph_for_hidden, to_edge_list
from .energy import EnergyModel, ClampSet, sigmoid, to_ising
from .samplers import (
    SampleBatch,
    Moments,
    ExactDistribution,
    exact_distribution,
    gibbs_sample,
    anneal_sample,
    geometric_schedule,
    moments,
    total_variation,
    GibbsSampler,
    AnnealSampler,
)

__all__ = [
    "ChimeraGraph", "build", "hidden_subgraph", "graph_for_hidden", "to_edge_list",
    "EnergyModel", "ClampSet", "sigmoid", "to_ising",
    "SampleBatch", "Moments", "ExactDistribution", "exact_distribution",
    "gibbs_sample", "anneal_sample", "geometric_schedule", "moments", "total_variation",
    "GibbsSampler", "AnnealSampler",
]
