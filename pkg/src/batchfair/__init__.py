"""Deterministic batch-order-fairness layer on simulated DAG BFT consensus."""

from .params import SimConfig, edge_threshold, quorum_size, solid_threshold
from .pipeline import FairnessPipeline
from .types import FinalOrder, orders_digest

__all__ = [
    "SimConfig",
    "FairnessPipeline",
    "FinalOrder",
    "edge_threshold",
    "orders_digest",
    "quorum_size",
    "solid_threshold",
]
