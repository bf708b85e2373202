"""Deterministic fluid drain model: closed-form reachability and an Euler oracle.

Levels y sit at time -t; the network then runs jump-free with continuous
inputs alpha until time 0. The closed form says whether c.Z(0) reaches x;
the Euler integrator checks it independently using the same regime table
as the simulator, with inputs switched on.
"""

from __future__ import annotations

from collections.abc import Sequence
import logging
import math

import numpy as np
from pydantic import BaseModel, ConfigDict

from .distributions import as_direction
from .exceptions import StabilityError
from .models import BigJumpEvent, DerivedQuantities, FluidState, Stability
from .network import check_stability, regime_table

_LOGGER = logging.getLogger(__name__)

_EULER_BAND = 10.0


def _require_strong(d: DerivedQuantities) -> None:
    if check_stability(d) is not Stability.strongly_stable:
        raise StabilityError("The fluid oracle needs Delta1 > 0 and Delta2 > 0")


def fluid_level(
    y1: np.ndarray | float,
    y2: np.ndarray | float,
    t: np.ndarray | float,
    d: DerivedQuantities,
    c: Sequence[float] | np.ndarray,
) -> np.ndarray | float:
    """c1 (y1 - t D1 - p21 (t D2 - y2)^+)^+ + c2 (y2 - t D2 - p12 (t D1 - y1)^+)^+."""
    net1, net2 = d.net_drain
    c_arr = np.asarray(c, dtype=float)
    c1, c2 = c_arr[..., 0], c_arr[..., 1]
    y1, y2, t = np.asarray(y1), np.asarray(y2), np.asarray(t)
    z1 = np.maximum(y1 - t * net1 - d.p21 * np.maximum(t * net2 - y2, 0.0), 0.0)
    z2 = np.maximum(y2 - t * net2 - d.p12 * np.maximum(t * net1 - y1, 0.0), 0.0)
    level = c1 * z1 + c2 * z2
    return float(level) if level.ndim == 0 else level


def reachability(
    fs: FluidState, d: DerivedQuantities, c: Sequence[float], x: float
) -> bool:
    """Whether levels y at time -t drain to c.Z(0) >= x."""
    _require_strong(d)
    direction = as_direction(c)
    if x < 0:
        raise ValueError(f"Level x must be >= 0, got {x}")
    return bool(fluid_level(fs.y1, fs.y2, fs.t, d, direction) >= x)


def single_jump_level(fs: FluidState, d: DerivedQuantities, c: Sequence[float]) -> float:
    """max(c1 (y1 - t D1 - p21 t D2), c2 (y2 - t D2 - p12 t D1))."""
    net1, net2 = d.net_drain
    c1, c2 = as_direction(c)
    return max(
        c1 * (fs.y1 - fs.t * net1 - d.p21 * fs.t * net2),
        c2 * (fs.y2 - fs.t * net2 - d.p12 * fs.t * net1),
    )


def single_jump_condition(
    fs: FluidState, d: DerivedQuantities, c: Sequence[float], x: float
) -> bool:
    """Union of the two one-coordinate big-jump events, with strict inequality."""
    _require_strong(d)
    return single_jump_level(fs, d, c) > x


def _slope_lookup(d: DerivedQuantities) -> np.ndarray:
    table = regime_table(d, inflow=d.alpha)
    slopes = np.zeros((2, 2, 2))
    for (b1, b2), entry in table.items():
        slopes[int(b1), int(b2)] = entry.slope
    return slopes


def integrate_fluid_many(
    y: np.ndarray, t: np.ndarray, d: DerivedQuantities, steps: int
) -> np.ndarray:
    """Forward Euler over [-t, 0] for many states at once; dt = t / steps."""
    _require_strong(d)
    slopes = _slope_lookup(d)
    z = np.array(y, dtype=float, copy=True)
    dt = np.asarray(t, dtype=float)[:, None] / steps
    for _ in range(steps):
        busy = (z > 0).astype(np.int64)
        z = np.maximum(z + slopes[busy[:, 0], busy[:, 1]] * dt, 0.0)
    return z


def integrate_fluid(fs: FluidState, d: DerivedQuantities, dt: float) -> tuple[float, float]:
    """Euler-integrated (Z1, Z2) at time 0 from levels y at time -t."""
    if not 0 < dt <= 1e-4 * fs.t:
        raise ValueError(f"Step {dt} must be positive and at most 1e-4 * t = {1e-4 * fs.t}")
    steps = math.ceil(fs.t / dt)
    z = integrate_fluid_many(np.array([[fs.y1, fs.y2]]), np.array([fs.t]), d, steps)
    return float(z[0, 0]), float(z[0, 1])


def big_jump_thresholds(
    d: DerivedQuantities, a: float, c: Sequence[float], x: float, n_max: int
) -> list[tuple[BigJumpEvent, BigJumpEvent]]:
    """Node-1 and node-2 jump thresholds for drain times t = n a, n = 0..n_max."""
    _require_strong(d)
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    c1, c2 = as_direction(c)
    net1, net2 = d.net_drain
    span1 = net1 + d.p21 * net2
    span2 = net2 + d.p12 * net1
    events = []
    for n in range(n_max + 1):
        t = n * a
        first = x / c1 + t * span1 if c1 > 0 else math.inf
        second = x / c2 + t * span2 if c2 > 0 else math.inf
        events.append(
            (
                BigJumpEvent(node=1, n=n, threshold=first),
                BigJumpEvent(node=2, n=n, threshold=second),
            )
        )
    return events


class OracleReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    total: int
    agreements: int
    boundary_disagreements: int
    other_disagreements: int
    band: float

    @property
    def agreement_fraction(self) -> float:
        return self.agreements / self.total

    @property
    def passed(self) -> bool:
        return self.other_disagreements == 0 and self.agreement_fraction >= 0.999


def equivalence_suite(
    d: DerivedQuantities,
    *,
    tuples: int = 10_000,
    seed: int = 0,
    steps: int = 10_000,
) -> OracleReport:
    """Closed form against Euler on random (y1, y2, t, c, x) tuples.

    Levels are drawn around the drain amounts t * Delta_i so that both
    L_i < t and L_i >= t occur, covering every drain sub-case.
    """
    _require_strong(d)
    rng = np.random.default_rng(seed)
    net = np.asarray(d.net_drain)
    t = rng.uniform(0.5, 5.0, tuples)
    y = rng.uniform(0.0, 2.0, (tuples, 2)) * net * t[:, None]
    y[rng.random((tuples, 2)) < 0.1] = 0.0
    c1 = rng.uniform(0.0, 1.0, tuples)
    c = np.column_stack([c1, 1.0 - c1])

    closed_level = np.asarray(fluid_level(y[:, 0], y[:, 1], t, d, c))
    x = np.where(
        closed_level > 0,
        closed_level * rng.uniform(0.5, 1.5, tuples),
        rng.uniform(0.0, 0.5, tuples),
    )
    closed = closed_level >= x

    euler_z = integrate_fluid_many(y, t, d, steps)
    euler_level = (c * euler_z).sum(axis=1)
    euler = euler_level >= x

    rate_bound = float(np.abs(_slope_lookup(d)).max())
    band = _EULER_BAND * (t / steps) * rate_bound
    disagree = closed != euler
    near = np.abs(euler_level - x) < band
    report = OracleReport(
        total=tuples,
        agreements=int((~disagree).sum()),
        boundary_disagreements=int((disagree & near).sum()),
        other_disagreements=int((disagree & ~near).sum()),
        band=float(band.max()),
    )
    _LOGGER.info(
        "Fluid oracle: %d/%d agree, %d in band, %d outside",
        report.agreements,
        report.total,
        report.boundary_disagreements,
        report.other_disagreements,
    )
    return report
