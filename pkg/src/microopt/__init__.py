"""Slice QoS modelling and primal-dual resource optimization."""

from .domain import (
    CapacityVector,
    ConfigurationError,
    CostWeights,
    ResourceVector,
    SlaSpec,
    TrafficSeries,
    normalized_cost,
    validate_sla,
)
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CapacityVector",
    "ConfigurationError",
    "CostWeights",
    "ResourceVector",
    "SlaSpec",
    "TrafficSeries",
    "normalized_cost",
    "validate_sla",
]
