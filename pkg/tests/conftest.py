"""Shared fixtures: the reference network and small, fast variants."""

from __future__ import annotations

from pathlib import Path
from typing import Any

import pytest

from fluidnet.distributions import (
    Exponential,
    IndependentJumps,
    MixtureJumps,
    Pareto,
)
from fluidnet.models import (
    DerivedQuantities,
    ExperimentConfig,
    NetworkParams,
    PathStats,
    PoissonArrivals,
)
from fluidnet.network import derive
from fluidnet.simulator import run

REFERENCE_TOML = """\
schema_version = 1

[network]
mu1 = 2.0
mu2 = 2.0
p12 = 0.5
p21 = 0.5

[network.arrival]
kind = "poisson"
rate = 1.0

[network.jumps]
kind = "mixture"
p1 = 0.5
p2 = 0.5
dist1 = { family = "pareto", scale = 1.0, index = 2.5 }
dist2 = { family = "pareto", scale = 1.0, index = 2.5 }

[simulate]
horizon = 2000.0
seeds = [1, 2]
directions = [[1.0, 0.0], [0.5, 0.5]]

[simulate.grid]
start = 1.0
stop = 100.0
num = 3

[analysis]
draws = 20000
comparison_directions = [[0.5, 0.5]]
"""


def symmetric_network(**overrides: Any) -> NetworkParams:
    """mu = (2, 2), p12 = p21 = 0.5, Poisson(1), Exp(1) jumps at one node at a time.

    Marginal jump means are (0.5, 0.5), so Delta = (0.5, 0.5).
    """
    values: dict[str, Any] = {
        "mu1": 2.0,
        "mu2": 2.0,
        "p12": 0.5,
        "p21": 0.5,
        "arrival": PoissonArrivals(rate=1.0),
        "jumps": MixtureJumps(
            p1=0.5, p2=0.5, dist1=Exponential(rate=1.0), dist2=Exponential(rate=1.0)
        ),
    }
    values.update(overrides)
    return NetworkParams(**values)


@pytest.fixture
def reference_params() -> NetworkParams:
    return NetworkParams(
        mu1=2.0,
        mu2=2.0,
        p12=0.5,
        p21=0.5,
        arrival=PoissonArrivals(rate=1.0),
        jumps=MixtureJumps(
            p1=0.5,
            p2=0.5,
            dist1=Pareto(scale=1.0, index=2.5),
            dist2=Pareto(scale=1.0, index=2.5),
        ),
    )


@pytest.fixture
def reference_derived(reference_params: NetworkParams) -> DerivedQuantities:
    return derive(reference_params)


@pytest.fixture
def symmetric_params() -> NetworkParams:
    return symmetric_network()


@pytest.fixture
def symmetric_derived(symmetric_params: NetworkParams) -> DerivedQuantities:
    return derive(symmetric_params)


@pytest.fixture
def stable_params() -> NetworkParams:
    """Delta = (-0.1, 0.5): stable but not strongly stable."""
    return symmetric_network(
        jumps=IndependentJumps(dist1=Exponential(rate=1 / 1.1), dist2=Exponential(rate=2.0))
    )


@pytest.fixture
def unstable_params() -> NetworkParams:
    """Delta = (-1, 0.1) with p21 = 0.5."""
    return symmetric_network(
        jumps=IndependentJumps(dist1=Exponential(rate=0.5), dist2=Exponential(rate=1 / 0.9))
    )


@pytest.fixture(scope="session")
def symmetric_stats() -> PathStats:
    """A short symmetric path with every accumulator switched on."""
    return run(
        symmetric_network(),
        horizon=20_000.0,
        warmup=1_000.0,
        grid=[0.5, 1.0, 2.0, 4.0],
        directions=[(1.0, 0.0), (0.5, 0.5)],
        seed=7,
        thetas=[(0.0, 0.0), (-0.5, 0.0), (0.0, -0.5), (-1.0, -1.0)],
        batches=10,
    )


def experiment_config(out: Path, **simulate: Any) -> ExperimentConfig:
    """A small symmetric experiment writing under ``out``."""
    section: dict[str, Any] = {
        "horizon": 5_000.0,
        "seeds": [1, 2],
        "workers": 1,
        "batches": 10,
        "directions": [[1.0, 0.0], [0.5, 0.5]],
        "thetas": [[-0.5, 0.0], [-1.0, -1.0]],
        "majorant": True,
        "grid": {"kind": "linear", "start": 0.5, "stop": 4.0, "num": 4},
    }
    section.update(simulate)
    return ExperimentConfig.model_validate(
        {
            "network": symmetric_network().model_dump(mode="json"),
            "simulate": section,
            "analysis": {"draws": 20_000, "comparison_directions": [[0.5, 0.5]]},
            "output": {"dir": str(out)},
        }
    )
