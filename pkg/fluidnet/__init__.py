"""Two-node stochastic fluid network with heavy-tailed batch input.

Exact event-driven simulation, geometric-sum tail bounds, exact tail
asymptotics and a deterministic fluid oracle.
"""

from __future__ import annotations

from .asymptotics import (
    exact_asymptote,
    theorem41_bounds,
    theorem42_bounds,
    weak_equivalence_report,
)
from .const import VERSION
from .exceptions import (
    CaseMismatchError,
    ConfigError,
    FluidNetError,
    GridMismatchError,
    NumericalInversionError,
    StabilityError,
)
from .models import (
    BoundKind,
    DerivedQuantities,
    DirectionCase,
    ExperimentConfig,
    NetworkParams,
    PathStats,
    Stability,
)
from .network import check_stability, classify_direction, derive
from .simulator import run, run_majorant

__version__ = VERSION

__all__ = [
    "BoundKind",
    "CaseMismatchError",
    "ConfigError",
    "DerivedQuantities",
    "DirectionCase",
    "ExperimentConfig",
    "FluidNetError",
    "GridMismatchError",
    "NetworkParams",
    "NumericalInversionError",
    "PathStats",
    "Stability",
    "StabilityError",
    "check_stability",
    "classify_direction",
    "derive",
    "exact_asymptote",
    "run",
    "run_majorant",
    "theorem41_bounds",
    "theorem42_bounds",
    "weak_equivalence_report",
]
