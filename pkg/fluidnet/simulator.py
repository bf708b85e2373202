"""Exact event-driven simulation of the reflected two-node network.

Between jumps every coordinate moves linearly, so a path is a sequence of
linear pieces. The event loop only computes piece boundaries; all time
integrals (tails, regulator increments, MGFs, Palm integrals) are taken in
closed form over batches of pieces with numpy.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
import logging
import math

import numpy as np

from .const import (
    ARRIVAL_CHUNK,
    COMPLEMENTARITY_EPSILON,
    DEFAULT_BATCHES,
    DEFAULT_WARMUP_FRACTION,
    DOMINANCE_TOLERANCE,
    PIECE_FLUSH,
    SIMULTANEOUS_HIT,
)
from .distributions import IndependentJumps, MixtureJumps, as_direction, jump_mgf
from .exceptions import FluidNetError, StabilityError
from .models import (
    DerivedQuantities,
    MajorantStats,
    NetworkParams,
    PathStats,
    Stability,
)
from .network import Regime, RegimeKey, derive, regime_table, require_simulable

_LOGGER = logging.getLogger(__name__)

# A jump-free interval crosses at most two zero-hitting times.
_MAX_PIECES_PER_INTERVAL = 8


@dataclass(slots=True)
class PathState:
    t: float = 0.0
    z1: float = 0.0
    z2: float = 0.0
    y1: float = 0.0
    y2: float = 0.0
    next_jump_time: float = math.inf


class _PieceLog:
    """Buffers linear pieces and hands them to a sink in chunks.

    Row layout: batch, length, z1, z2, slope1, slope2, dy1, dy2, end1, end2.
    Batch -1 marks warmup.
    """

    __slots__ = ("batch", "rows", "sink")

    def __init__(self, sink: Callable[[np.ndarray], None]) -> None:
        self.batch = -1
        self.rows: list[tuple[float, ...]] = []
        self.sink = sink

    def add(self, *row: float) -> None:
        self.rows.append((self.batch, *row))
        if len(self.rows) >= PIECE_FLUSH:
            self.flush()

    def flush(self) -> None:
        if self.rows:
            self.sink(np.array(self.rows, dtype=float))
            self.rows.clear()


def advance_to(
    s: PathState,
    target: float,
    table: dict[RegimeKey, Regime],
    log: _PieceLog | None = None,
) -> PathState:
    """Integrate the jump-free dynamics exactly from s.t up to ``target``."""
    pieces = 0
    while s.t < target:
        pieces += 1
        if pieces > _MAX_PIECES_PER_INTERVAL:
            raise FluidNetError(f"Too many regime changes before t={target}")
        entry = table[(s.z1 > 0, s.z2 > 0)]
        s1, s2 = entry.slope
        g1, g2 = entry.regulator

        remaining = target - s.t
        h1 = s.z1 / -s1 if s.z1 > 0 and s1 < 0 else math.inf
        h2 = s.z2 / -s2 if s.z2 > 0 and s2 < 0 else math.inf
        dt = min(remaining, h1, h2)

        e1 = 0.0 if h1 <= dt + SIMULTANEOUS_HIT else max(s.z1 + s1 * dt, 0.0)
        e2 = 0.0 if h2 <= dt + SIMULTANEOUS_HIT else max(s.z2 + s2 * dt, 0.0)
        if log is not None:
            log.add(dt, s.z1, s.z2, s1, s2, g1, g2, e1, e2)

        s.y1 += g1 * dt
        s.y2 += g2 * dt
        s.z1, s.z2 = e1, e2
        s.t = target if dt == remaining else s.t + dt
    return s


def advance_to_jump(
    s: PathState,
    d: DerivedQuantities,
    table: dict[RegimeKey, Regime] | None = None,
    log: _PieceLog | None = None,
) -> PathState:
    if not s.t < s.next_jump_time:
        raise ValueError(f"Clock {s.t} is not before the next jump {s.next_jump_time}")
    return advance_to(s, s.next_jump_time, table or regime_table(d), log)


def apply_jump(s: PathState, j: Sequence[float], gap: float) -> PathState:
    """Add a jump and schedule the next one ``gap`` time units later."""
    if j[0] < 0 or j[1] < 0:
        raise ValueError(f"Jumps must be nonnegative, got {tuple(j)}")
    s.z1 += j[0]
    s.z2 += j[1]
    s.next_jump_time = s.t + gap
    return s


class _ArrivalFeed:
    """Pre-drawn interarrival gaps and jump sizes from one generator."""

    def __init__(self, params: NetworkParams, rng: np.random.Generator) -> None:
        self._arrival = params.arrival
        self._jumps = params.jumps
        self._rng = rng
        self._index = ARRIVAL_CHUNK
        self._gaps: list[float] = []
        self._j1: list[float] = []
        self._j2: list[float] = []

    def first_gap(self) -> float:
        return float(self._arrival.gaps(self._rng, 1)[0])

    def next(self) -> tuple[float, float, float]:
        if self._index >= ARRIVAL_CHUNK:
            j1, j2 = self._jumps.sample_many(self._rng, ARRIVAL_CHUNK)
            self._gaps = self._arrival.gaps(self._rng, ARRIVAL_CHUNK).tolist()
            self._j1, self._j2 = j1.tolist(), j2.tolist()
            self._index = 0
        i = self._index
        self._index += 1
        return self._j1[i], self._j2[i], self._gaps[i]


def _time_above(
    level: np.ndarray, slope: np.ndarray, length: np.ndarray, grid: np.ndarray
) -> np.ndarray:
    """Time each linear piece spends strictly above each grid level.

    ``level`` and ``slope`` are (n, k); ``length`` is (n,); result (n, k, G).
    """
    a = level[:, :, None]
    b = slope[:, :, None]
    span = length[:, None, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        cross = (grid - a) / b
    rising = span - np.clip(cross, 0.0, span)
    falling = np.clip(cross, 0.0, span)
    flat = np.where(a > grid, span, 0.0)
    return np.where(b > 0, rising, np.where(b < 0, falling, flat))


def _exp_integral(level: np.ndarray, slope: np.ndarray, length: np.ndarray) -> np.ndarray:
    """Integral of exp(level + slope s) over [0, length], elementwise."""
    rate = np.abs(slope)
    top = np.maximum(level, level + slope * length)
    with np.errstate(divide="ignore", invalid="ignore"):
        shape = -np.expm1(-rate * length) / rate
    shape = np.where(rate > 0, shape, length)
    return np.exp(top) * shape


@dataclass
class _Accumulator:
    """Closed-form integrals of buffered pieces, per batch."""

    derived: DerivedQuantities
    grid: np.ndarray
    directions: np.ndarray
    thetas: np.ndarray
    batches: int
    batch_time: np.ndarray = field(init=False)
    tail_time: np.ndarray = field(init=False)
    y_inc: np.ndarray = field(init=False)
    empty_time: np.ndarray = field(init=False)
    palm_tail: np.ndarray = field(init=False)
    palm_atom: np.ndarray = field(init=False)
    boundary_time: np.ndarray = field(init=False)
    mgf: np.ndarray = field(init=False)
    palm_mgf: np.ndarray = field(init=False)
    edge_mgf: np.ndarray = field(init=False)
    max_reflection_residual: float = 0.0
    complementarity: np.ndarray = field(init=False)
    min_z: float = math.inf

    def __post_init__(self) -> None:
        b, g = self.batches, self.grid.size
        k, dirs = self.thetas.shape[0], self.directions.shape[0]
        self.batch_time = np.zeros(b)
        self.tail_time = np.zeros((b, dirs, g))
        self.y_inc = np.zeros((b, 2))
        self.empty_time = np.zeros(b)
        self.palm_tail = np.zeros((b, 2, g))
        self.palm_atom = np.zeros((b, 2))
        self.boundary_time = np.zeros((b, 2, g))
        self.mgf = np.zeros((b, k))
        self.palm_mgf = np.zeros((b, 2, k))
        self.edge_mgf = np.zeros((b, 2, k))
        self.complementarity = np.zeros(2)
        p12, p21 = self.derived.p12, self.derived.p21
        self._reflection = np.array([[1.0, -p21], [-p12, 1.0]])
        self._delta = np.asarray(self.derived.delta)

    def add(self, rows: np.ndarray) -> None:
        batch = rows[:, 0].astype(np.int64)
        length = rows[:, 1]
        z = rows[:, 2:4]
        slope = rows[:, 4:6]
        growth = rows[:, 6:8]
        end = rows[:, 8:10]

        # Z(end) - Z(start) = -delta * dt + R * dY on every piece.
        dy = growth * length[:, None]
        residual = end - z + self._delta * length[:, None] - dy @ self._reflection.T
        self.max_reflection_residual = max(
            self.max_reflection_residual, float(np.abs(residual).max())
        )
        self.min_z = min(self.min_z, float(z.min()), float(end.min()))
        positive = (z > COMPLEMENTARITY_EPSILON) | (end > COMPLEMENTARITY_EPSILON)
        self.complementarity += (dy * positive).sum(axis=0)

        for b in np.unique(batch[batch >= 0]):
            mask = batch == b
            self._add_batch(int(b), length[mask], z[mask], slope[mask], growth[mask])

    def _add_batch(
        self,
        b: int,
        length: np.ndarray,
        z: np.ndarray,
        slope: np.ndarray,
        growth: np.ndarray,
    ) -> None:
        pinned = (z == 0.0) & (slope == 0.0)
        other_pinned = pinned[:, ::-1]
        empty = pinned.all(axis=1)
        other_z, other_slope = z[:, ::-1], slope[:, ::-1]

        self.batch_time[b] += length.sum()
        self.y_inc[b] += (growth * length[:, None]).sum(axis=0)
        self.empty_time[b] += length[empty].sum()
        self.palm_atom[b] += (growth * length[:, None] * other_pinned).sum(axis=0)

        directional = _time_above(
            z @ self.directions.T, slope @ self.directions.T, length, self.grid
        )
        self.tail_time[b] += directional.sum(axis=0)

        own_above = _time_above(z, slope, length, self.grid)
        self.boundary_time[b] += (own_above * other_pinned[:, :, None]).sum(axis=0)
        other_above = _time_above(other_z, other_slope, length, self.grid)
        self.palm_tail[b] += (other_above * growth[:, :, None]).sum(axis=0)

        if self.thetas.shape[0] == 0:
            return
        self.mgf[b] += _exp_integral(
            z @ self.thetas.T, slope @ self.thetas.T, length[:, None]
        ).sum(axis=0)
        other_theta = self.thetas[:, ::-1].T[None, :, :]
        other_integral = _exp_integral(
            other_z[:, :, None] * other_theta,
            other_slope[:, :, None] * other_theta,
            length[:, None, None],
        )
        self.palm_mgf[b] += (other_integral * growth[:, :, None]).sum(axis=0)
        self.edge_mgf[b] += (other_integral * pinned[:, :, None]).sum(axis=0)


class _MajorantTracker:
    """Parallel queues driven by the same jumps, each draining at delta_i."""

    def __init__(self, derived: DerivedQuantities, grid: np.ndarray, batches: int) -> None:
        self.delta = derived.delta
        self.grid = grid
        self.z1 = 0.0
        self.z2 = 0.0
        self.batch_time = np.zeros(batches)
        self.tail_time = np.zeros((batches, 2, grid.size))
        self.epochs = 0
        self.violations = 0
        self.max_shortfall = 0.0
        self._rows: list[tuple[float, float, float, float]] = []

    def advance(self, dt: float, batch: int) -> None:
        if dt <= 0:
            return
        self._rows.append((batch, dt, self.z1, self.z2))
        if len(self._rows) >= PIECE_FLUSH:
            self.flush()
        self.z1 = max(self.z1 - self.delta[0] * dt, 0.0)
        self.z2 = max(self.z2 - self.delta[1] * dt, 0.0)

    def jump(self, j1: float, j2: float) -> None:
        self.z1 += j1
        self.z2 += j2

    def check(self, s: PathState) -> None:
        self.epochs += 1
        shortfall = max(s.z1 - self.z1, s.z2 - self.z2)
        if shortfall > DOMINANCE_TOLERANCE:
            self.violations += 1
            self.max_shortfall = max(self.max_shortfall, shortfall)
            _LOGGER.debug("Majorant below path by %g at t=%g", shortfall, s.t)

    def flush(self) -> None:
        if not self._rows:
            return
        rows = np.array(self._rows, dtype=float)
        self._rows.clear()
        batch = rows[:, 0].astype(np.int64)
        length = rows[:, 1]
        level = rows[:, 2:4]
        delta = np.asarray(self.delta)
        above = np.clip(
            (level[:, :, None] - self.grid) / delta[None, :, None],
            0.0,
            length[:, None, None],
        )
        for b in np.unique(batch[batch >= 0]):
            mask = batch == b
            self.batch_time[b] += length[mask].sum()
            self.tail_time[b] += above[mask].sum(axis=0)


@dataclass(frozen=True, slots=True)
class SeedResult:
    stats: PathStats
    majorant: MajorantStats | None


class _DriftCheck:
    """Z(t) = J(t) - delta t + R Y(t) along a path started empty.

    Checked at every event epoch, so error that builds up across pieces shows.
    The residual is relative to the size of the accumulated terms.
    """

    __slots__ = ("delta", "j1", "j2", "max_residual", "p12", "p21")

    def __init__(self, derived: DerivedQuantities) -> None:
        self.delta = derived.delta
        self.p12, self.p21 = derived.p12, derived.p21
        self.j1 = 0.0
        self.j2 = 0.0
        self.max_residual = 0.0

    def jump(self, j1: float, j2: float) -> None:
        self.j1 += j1
        self.j2 += j2

    def check(self, s: PathState) -> float:
        d1, d2 = self.delta
        r1 = s.z1 - self.j1 + d1 * s.t - (s.y1 - self.p21 * s.y2)
        r2 = s.z2 - self.j2 + d2 * s.t - (s.y2 - self.p12 * s.y1)
        scale = max(1.0, self.j1 + self.j2 + (abs(d1) + abs(d2)) * s.t + s.y1 + s.y2)
        residual = max(abs(r1), abs(r2)) / scale
        self.max_residual = max(self.max_residual, residual)
        return residual


def _breakpoints(horizon: float, warmup: float, batches: int) -> list[float]:
    span = horizon - warmup
    stops = [warmup] + [warmup + span * k / batches for k in range(1, batches)]
    return [*stops, horizon]


def simulate(
    params: NetworkParams,
    *,
    horizon: float,
    warmup: float | None = None,
    grid: Sequence[float],
    directions: Sequence[Sequence[float]] = ((1.0, 0.0),),
    seed: int,
    thetas: Sequence[Sequence[float]] = (),
    batches: int = DEFAULT_BATCHES,
    majorant: bool = False,
) -> SeedResult:
    """One seeded path from Z = 0 with optional coupled majorant."""
    warmup = DEFAULT_WARMUP_FRACTION * horizon if warmup is None else warmup
    if not 0 < warmup < horizon:
        raise ValueError(f"Need horizon > warmup > 0, got {horizon} and {warmup}")
    if batches < 2:
        raise ValueError(f"Batch means need at least 2 batches, got {batches}")
    grid_arr = np.asarray(grid, dtype=float)
    if grid_arr.ndim != 1 or grid_arr.size == 0 or (grid_arr < 0).any():
        raise ValueError("Grid must be a nonempty list of levels >= 0")
    dirs = [as_direction(c) for c in directions]
    theta_arr = np.asarray(thetas, dtype=float).reshape(-1, 2)
    if (theta_arr > 0).any():
        raise ValueError("MGF arguments must be <= 0 componentwise")

    derived = derive(params)
    stability = require_simulable(derived, dirs)
    if majorant and stability is not Stability.strongly_stable:
        raise StabilityError("The majorant needs a strongly stable network")

    table = regime_table(derived)
    rng = np.random.default_rng(seed)
    feed = _ArrivalFeed(params, rng)
    acc = _Accumulator(
        derived=derived,
        grid=grid_arr,
        directions=np.asarray(dirs, dtype=float),
        thetas=theta_arr,
        batches=batches,
    )
    log = _PieceLog(acc.add)
    tracker = _MajorantTracker(derived, grid_arr, batches) if majorant else None
    drift = _DriftCheck(derived)

    s = PathState(next_jump_time=feed.first_gap())
    events = 0
    for index, stop in enumerate(_breakpoints(horizon, warmup, batches)):
        while s.next_jump_time <= stop:
            start = s.t
            advance_to(s, s.next_jump_time, table, log)
            drift.check(s)
            if tracker is not None:
                tracker.advance(s.t - start, log.batch)
                tracker.check(s)
            j1, j2, gap = feed.next()
            apply_jump(s, (j1, j2), gap)
            drift.jump(j1, j2)
            if tracker is not None:
                tracker.jump(j1, j2)
            events += 1
        start = s.t
        advance_to(s, stop, table, log)
        drift.check(s)
        if tracker is not None:
            tracker.advance(s.t - start, log.batch)
            tracker.check(s)
        log.batch = index
    log.flush()
    residual = max(acc.max_reflection_residual, drift.max_residual)

    _LOGGER.debug(
        "Seed %s: %d jumps, residual %.3g, final z=(%.4g, %.4g)",
        seed,
        events,
        residual,
        s.z1,
        s.z2,
    )
    stats = PathStats(
        seeds=[seed],
        arrival_kind=params.arrival.kind,
        grid=grid_arr,
        directions=dirs,
        thetas=theta_arr,
        batch_seeds=[seed] * batches,
        batch_time=acc.batch_time,
        tail_time=acc.tail_time,
        y_inc=acc.y_inc,
        empty_time=acc.empty_time,
        palm_tail=acc.palm_tail,
        palm_atom=acc.palm_atom,
        boundary_time=acc.boundary_time,
        mgf=acc.mgf,
        palm_mgf=acc.palm_mgf,
        edge_mgf=acc.edge_mgf,
        max_reflection_residual=residual,
        max_complementarity=float(acc.complementarity.max()),
        min_z=acc.min_z,
        events=events,
    )
    majorant_stats = None
    if tracker is not None:
        tracker.flush()
        majorant_stats = MajorantStats(
            seeds=[seed],
            grid=grid_arr,
            batch_time=tracker.batch_time,
            tail_time=tracker.tail_time,
            epochs_checked=tracker.epochs,
            dominance_violations=tracker.violations,
            max_shortfall=tracker.max_shortfall,
        )
    return SeedResult(stats=stats, majorant=majorant_stats)


def run(
    params: NetworkParams,
    *,
    horizon: float,
    warmup: float | None = None,
    grid: Sequence[float],
    directions: Sequence[Sequence[float]] = ((1.0, 0.0),),
    seed: int,
    thetas: Sequence[Sequence[float]] = (),
    batches: int = DEFAULT_BATCHES,
) -> PathStats:
    return simulate(
        params,
        horizon=horizon,
        warmup=warmup,
        grid=grid,
        directions=directions,
        seed=seed,
        thetas=thetas,
        batches=batches,
    ).stats


def run_majorant(
    params: NetworkParams,
    *,
    horizon: float,
    warmup: float | None = None,
    grid: Sequence[float],
    seed: int,
    batches: int = DEFAULT_BATCHES,
) -> tuple[MajorantStats, bool]:
    """Majorant tails coupled to the network path, and pathwise dominance."""
    result = simulate(
        params,
        horizon=horizon,
        warmup=warmup,
        grid=grid,
        seed=seed,
        batches=batches,
        majorant=True,
    )
    assert result.majorant is not None
    return result.majorant, result.majorant.dominance


def _balance_terms(
    stats: PathStats,
    d: DerivedQuantities,
    theta: Sequence[float],
    jumps: IndependentJumps | MixtureJumps,
) -> tuple[float, np.ndarray]:
    if stats.arrival_kind != "poisson":
        raise ValueError("The balance equation needs Poisson arrivals")
    t1, t2 = float(theta[0]), float(theta[1])
    if t1 > 0 or t2 > 0:
        raise ValueError(f"Balance residual is taken at theta <= 0, got {(t1, t2)}")
    k = stats.theta_index((t1, t2))
    kappa = d.delta[0] * t1 + d.delta[1] * t2 - d.rate * (jump_mgf(jumps, (t1, t2)) - 1.0)

    def residual(time: np.ndarray, mgf, palm1, palm2):
        return (
            kappa * mgf / time
            - (t1 - d.p12 * t2) * palm1 / time
            - (t2 - d.p21 * t1) * palm2 / time
        )

    pooled = residual(
        stats.batch_time.sum(),
        stats.mgf[:, k].sum(),
        stats.palm_mgf[:, 0, k].sum(),
        stats.palm_mgf[:, 1, k].sum(),
    )
    per_batch = residual(
        stats.batch_time, stats.mgf[:, k], stats.palm_mgf[:, 0, k], stats.palm_mgf[:, 1, k]
    )
    return float(pooled), per_batch


def balance_residual(
    stats: PathStats,
    d: DerivedQuantities,
    theta: Sequence[float],
    jumps: IndependentJumps | MixtureJumps,
) -> float:
    """|kappa(theta) phi(theta) - boundary terms| from simulated transforms."""
    return abs(_balance_terms(stats, d, theta, jumps)[0])


def balance_residual_with_error(
    stats: PathStats,
    d: DerivedQuantities,
    theta: Sequence[float],
    jumps: IndependentJumps | MixtureJumps,
) -> tuple[float, float]:
    """Balance residual and its batch-means standard error."""
    pooled, per_batch = _balance_terms(stats, d, theta, jumps)
    se = float(per_batch.std(ddof=1) / math.sqrt(per_batch.size))
    return abs(pooled), se


def boundary_identity_residual(
    stats: PathStats, d: DerivedQuantities, theta: Sequence[float], node: int = 1
) -> float:
    """|phi_i(theta_j) - delta_i phi(edge_i, theta_j) - p_ji mu_j pi(0)|.

    Holds pathwise, so the residual is rounding error only.
    """
    k = stats.theta_index(theta)
    i = node - 1
    j = 1 - i
    routing = d.p21 if node == 1 else d.p12
    time = stats.horizon
    palm = stats.palm_mgf[:, i, k].sum() / time
    edge = stats.edge_mgf[:, i, k].sum() / time
    return abs(palm - d.delta[i] * edge - routing * d.mu[j] * stats.empty_fraction)
