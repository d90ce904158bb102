"""Sparse exchangeable (graphex) models for bipartite relational data."""

from graphex.graph import (
    BipartiteGraph,
    SamplingRecord,
    edge_density,
    load_edge_list,
    pq_sample,
    write_edge_list,
)

__all__ = [
    "BipartiteGraph",
    "SamplingRecord",
    "edge_density",
    "load_edge_list",
    "pq_sample",
    "write_edge_list",
]

__version__ = "0.1.0"
