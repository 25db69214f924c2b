"""Scalar quasinormal modes of Kerr-AdS black holes."""
from .geometry import BlackHoleParams, Chart, HorizonData, SpacetimePoint, find_horizon, inverse_metric
from .stationary import BoundaryCondition, DiscreteOperator, GridSpec, assemble, build_grid

__version__ = "0.1.0"

__all__ = [
    "BlackHoleParams",
    "Chart",
    "HorizonData",
    "SpacetimePoint",
    "find_horizon",
    "inverse_metric",
    "BoundaryCondition",
    "DiscreteOperator",
    "GridSpec",
    "assemble",
    "build_grid",
]
