from __future__ import annotations

from collections.abc import Iterator, Sequence
from enum import StrEnum
import hashlib
import json
import math
from pathlib import Path
from typing import Annotated, Any, Literal

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PlainSerializer,
    PlainValidator,
    computed_field,
    field_validator,
    model_validator,
)
from scipy import stats

from .const import (
    CONFIDENCE_LEVEL,
    CONFIG_SCHEMA_VERSION,
    DEFAULT_BATCHES,
    DEFAULT_DRAWS,
    DEFAULT_WARMUP_FRACTION,
    SERIES_RELATIVE_CUTOFF,
)
from .distributions import Direction, HeavyDist, JumpModel, as_direction
from .exceptions import GridMismatchError


def _to_array(value: Any) -> np.ndarray:
    return np.asarray(value, dtype=float)


type Array = Annotated[
    np.ndarray,
    PlainValidator(_to_array),
    PlainSerializer(lambda a: np.asarray(a).tolist(), return_type=list),
]


def batch_means(integrals: np.ndarray, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pooled time average and batch-means confidence halfwidth.

    ``integrals`` has the batch axis first; ``times`` holds the batch lengths.
    """
    shape = (-1,) + (1,) * (integrals.ndim - 1)
    pooled = integrals.sum(axis=0) / times.sum()
    batches = times.size
    if batches < 2:
        return pooled, np.full_like(pooled, math.inf)
    per_batch = integrals / times.reshape(shape)
    quantile = stats.t.ppf(0.5 + CONFIDENCE_LEVEL / 2.0, batches - 1)
    spread = per_batch.std(axis=0, ddof=1)
    return pooled, quantile * spread / math.sqrt(batches)


class Stability(StrEnum):
    unstable = "unstable"
    stable = "stable"
    strongly_stable = "strongly_stable"

    @property
    def simulable(self) -> bool:
        return self is not Stability.unstable


class DirectionCase(StrEnum):
    c0 = "C0"
    c1 = "C1"
    c2 = "C2"

    @property
    def mirrored(self) -> DirectionCase:
        match self:
            case DirectionCase.c1:
                return DirectionCase.c2
            case DirectionCase.c2:
                return DirectionCase.c1
            case _:
                return DirectionCase.c0


class BoundKind(StrEnum):
    """Which evaluation produced a bound."""

    geom_sum_exact = "geom_sum_exact"
    geom_sum_asymptotic = "geom_sum_asymptotic"


class EtaReading(StrEnum):
    """Coefficient on the second upper-bound term for C0 directions.

    ``as_printed`` uses eta(1) on both terms; ``symmetric`` uses eta(2) on
    the second.
    """

    as_printed = "as_printed"
    symmetric = "symmetric"


class PoissonArrivals(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["poisson"] = "poisson"
    rate: float = Field(gt=0, allow_inf_nan=False)

    def gaps(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.exponential(1.0 / self.rate, n)


class RenewalArrivals(BaseModel):
    """Renewal input with a general finite-mean interarrival law."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["renewal"] = "renewal"
    interarrival: HeavyDist

    @model_validator(mode="after")
    def _check_mean(self) -> RenewalArrivals:
        if not self.interarrival.mean > 0:
            raise ValueError("Interarrival mean must be positive")
        return self

    @property
    def rate(self) -> float:
        return 1.0 / self.interarrival.mean

    def gaps(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.interarrival.sample_many(rng, n)


type ArrivalModel = Annotated[
    PoissonArrivals | RenewalArrivals, Field(discriminator="kind")
]


class NetworkParams(BaseModel):
    """Release rates, routing fractions, arrival and jump models."""

    model_config = ConfigDict(frozen=True)

    mu1: float = Field(gt=0, allow_inf_nan=False)
    mu2: float = Field(gt=0, allow_inf_nan=False)
    p12: float = Field(ge=0, lt=1)
    p21: float = Field(ge=0, lt=1)
    arrival: ArrivalModel
    jumps: JumpModel

    @model_validator(mode="after")
    def _check_routing(self) -> NetworkParams:
        if not self.p12 * self.p21 < 1:
            raise ValueError(f"p12 * p21 must be below 1, got {self.p12 * self.p21}")
        if not self.p12 + self.p21 > 0:
            raise ValueError("At least one routing fraction must be positive")
        return self

    @property
    def mu(self) -> tuple[float, float]:
        return (self.mu1, self.mu2)

    @property
    def rate(self) -> float:
        return self.arrival.rate

    @property
    def mean_gap(self) -> float:
        return 1.0 / self.arrival.rate

    def swapped(self) -> NetworkParams:
        return NetworkParams(
            mu1=self.mu2,
            mu2=self.mu1,
            p12=self.p21,
            p21=self.p12,
            arrival=self.arrival,
            jumps=self.jumps.swapped(),
        )


class DerivedQuantities(BaseModel):
    """Closed-form scalars of a network.

    ``net_drain`` is delta - alpha, the drain rate net of the mean input.
    Index 0 refers to node 1 throughout.
    """

    model_config = ConfigDict(frozen=True)

    mu: tuple[float, float]
    p12: float
    p21: float
    rate: float
    jump_means: tuple[float, float]
    delta: tuple[float, float]
    alpha: tuple[float, float]
    net_drain: tuple[float, float]
    net_drain_check: tuple[float, float]
    rho: tuple[float, float]
    r: tuple[float, float]
    r_prime: tuple[float, float]
    reflection: tuple[tuple[float, float], tuple[float, float]]
    reflection_inverse: tuple[tuple[float, float], tuple[float, float]]

    @property
    def empty_bound(self) -> float:
        """Strict upper bound on the stationary empty probability."""
        return min(1.0 - self.rho[0], 1.0 - self.rho[1])

    @property
    def boundary_rates(self) -> tuple[float, float]:
        """Long-run regulator rates mu_i (1 - rho_i)."""
        return (
            self.mu[0] * (1.0 - self.rho[0]),
            self.mu[1] * (1.0 - self.rho[1]),
        )

    def swapped(self) -> DerivedQuantities:
        def flip(pair: tuple[float, float]) -> tuple[float, float]:
            return (pair[1], pair[0])

        (a, b), (c, d) = self.reflection
        (ai, bi), (ci, di) = self.reflection_inverse
        return DerivedQuantities(
            mu=flip(self.mu),
            p12=self.p21,
            p21=self.p12,
            rate=self.rate,
            jump_means=flip(self.jump_means),
            delta=flip(self.delta),
            alpha=flip(self.alpha),
            net_drain=flip(self.net_drain),
            net_drain_check=flip(self.net_drain_check),
            rho=flip(self.rho),
            r=flip(self.r),
            r_prime=flip(self.r_prime),
            reflection=((d, c), (b, a)),
            reflection_inverse=((di, ci), (bi, ai)),
        )


class DirectionCoefficients(BaseModel):
    """Per-direction constants; ``r_c_prime`` and ``d`` exist only off C0."""

    model_config = ConfigDict(frozen=True)

    direction: Direction
    case: DirectionCase
    r_c: float
    r_c_prime: float | None
    eta: tuple[float, float]
    m_c: float
    d: tuple[float, float] | None

    @field_validator("direction", mode="before")
    @classmethod
    def _check_direction(cls, value: Sequence[float]) -> Direction:
        return as_direction(value)


class FluidState(BaseModel):
    """Deterministic fluid levels y at time -t."""

    model_config = ConfigDict(frozen=True)

    y1: float = Field(ge=0)
    y2: float = Field(ge=0)
    t: float = Field(gt=0)

    def drain_times(self, net_drain: tuple[float, float]) -> tuple[float, float]:
        """(L1, L2) = (y1 / Delta1, y2 / Delta2)."""
        return (self.y1 / net_drain[0], self.y2 / net_drain[1])


class BigJumpEvent(BaseModel):
    """A single jump at node ``node`` large enough to push c.Z above x."""

    model_config = ConfigDict(frozen=True)

    node: Literal[1, 2]
    n: int = Field(ge=0)
    threshold: float

    def occurs(self, y: tuple[float, float]) -> bool:
        return y[self.node - 1] > self.threshold


class BoundReport(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    direction: Direction
    grid: Array
    lower: Array
    upper: Array
    lower_se: Array | None = None
    upper_se: Array | None = None
    lower_kind: BoundKind
    upper_kind: BoundKind
    case: DirectionCase
    constants: dict[str, float]
    pre_asymptotic: list[bool]
    eta_reading: EtaReading | None = None

    def rows(self) -> Iterator[tuple[float, float, float, str, str, float]]:
        """(x, lower, upper, mode, case, direction_c1) rows for CSV output."""
        for x, lo, hi in zip(self.grid, self.lower, self.upper, strict=True):
            yield (
                float(x),
                float(lo),
                float(hi),
                self.upper_kind.value,
                self.case.value,
                self.direction[0],
            )


class SeriesEvaluation(BaseModel):
    """A truncated big-jump series with its remainder bracketed by integrals.

    ``value`` is the partial sum plus the midpoint of the bracket, so its
    error is at most half the bracket width.
    """

    model_config = ConfigDict(frozen=True)

    value: float
    partial_sum: float
    terms: int
    remainder_low: float
    remainder_bound: float


class ExactAsymptote(BaseModel):
    """Two-term tail asymptote for one-dimensional mixture jumps."""

    model_config = ConfigDict(frozen=True)

    direction: Direction
    coefficients: tuple[float, float]
    weights: tuple[float, float]
    spans: tuple[float, float]
    mean_gap: float
    dist1: HeavyDist
    dist2: HeavyDist

    @property
    def dists(self) -> tuple[HeavyDist, HeavyDist]:
        return (self.dist1, self.dist2)

    def evaluate(self, x: float | np.ndarray) -> float | np.ndarray:
        """coeff_i * integrated tail of F_i at x / c_i, summed; x/0 = inf."""
        xs = np.asarray(x, dtype=float)
        total = np.zeros_like(xs)
        for coeff, c, dist in zip(self.coefficients, self.direction, self.dists, strict=True):
            if c > 0:
                total = total + coeff * np.asarray(dist.excess(xs / c)) / dist.mean
        return float(total) if np.ndim(x) == 0 else total

    def series(self, x: float, cutoff: float = SERIES_RELATIVE_CUTOFF) -> SeriesEvaluation:
        """Sum over n >= 1 of p_i * tail_i(x / c_i + n a span_i).

        Stops at the first n whose summand is below ``cutoff`` times the
        partial sum; the dropped terms lie between the integrals of the
        summand from n* + 1 and from n*.
        """
        active = [
            (p, c, span, dist)
            for p, c, span, dist in zip(
                self.weights, self.direction, self.spans, self.dists, strict=True
            )
            if c > 0
        ]

        def summand(n: np.ndarray) -> np.ndarray:
            return sum(
                p * np.asarray(dist.tail(x / c + n * self.mean_gap * span))
                for p, c, span, dist in active
            )

        def remainder(n: float) -> float:
            return sum(
                p * float(dist.excess(x / c + n * self.mean_gap * span)) / (self.mean_gap * span)
                for p, c, span, dist in active
            )

        partial = 0.0
        start = 1
        block = 4096
        while True:
            n = np.arange(start, start + block, dtype=float)
            terms = summand(n)
            running = partial + np.cumsum(terms)
            below = np.nonzero(terms < cutoff * running)[0]
            if below.size:
                last = int(below[0])
                partial = float(running[last])
                n_star = start + last
                break
            partial = float(running[-1])
            start += block
            block *= 2
        low, high = remainder(n_star + 1.0), remainder(float(n_star))
        return SeriesEvaluation(
            value=partial + 0.5 * (low + high),
            partial_sum=partial,
            terms=n_star,
            remainder_low=low,
            remainder_bound=high,
        )


class EquivalenceReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    ratios: list[tuple[float, float]]
    admissible: bool
    min_ratio: float | None = None
    max_ratio: float | None = None
    message: str | None = None


class PathStats(BaseModel):
    """Batch-level integrals of one or more simulated paths.

    Every estimate is a pooled time average; the batch axis (first) carries
    the data for batch-means confidence halfwidths. Arrays compare by
    serialized form, never with ``==``.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    seeds: list[int]
    arrival_kind: Literal["poisson", "renewal"]
    grid: Array
    directions: list[Direction]
    thetas: Array
    batch_seeds: list[int]
    batch_time: Array
    tail_time: Array
    y_inc: Array
    empty_time: Array
    palm_tail: Array
    palm_atom: Array
    boundary_time: Array
    mgf: Array
    palm_mgf: Array
    edge_mgf: Array
    max_reflection_residual: float
    max_complementarity: float
    min_z: float
    events: int

    @field_validator("thetas", mode="after")
    @classmethod
    def _theta_pairs(cls, value: np.ndarray) -> np.ndarray:
        return value.reshape(-1, 2)

    @computed_field
    @property
    def horizon(self) -> float:
        """Total observed (post-warmup) time."""
        return float(self.batch_time.sum())

    def estimate(self, field: str) -> tuple[np.ndarray, np.ndarray]:
        """Pooled time average of a batch-level integral and its halfwidth."""
        return batch_means(np.asarray(getattr(self, field)), self.batch_time)

    def per_batch(self, field: str) -> np.ndarray:
        values = np.asarray(getattr(self, field))
        shape = (-1,) + (1,) * (values.ndim - 1)
        return values / self.batch_time.reshape(shape)

    @property
    def tail_estimates(self) -> np.ndarray:
        return self.estimate("tail_time")[0]

    @property
    def y_rate(self) -> np.ndarray:
        return self.estimate("y_inc")[0]

    @property
    def empty_fraction(self) -> float:
        return float(self.estimate("empty_time")[0])

    def direction_index(self, c: Sequence[float]) -> int:
        wanted = as_direction(c)
        for index, direction in enumerate(self.directions):
            if abs(direction[0] - wanted[0]) < 1e-12:
                return index
        raise GridMismatchError(f"Direction {wanted} was not simulated")

    def theta_index(self, theta: Sequence[float]) -> int:
        for index, row in enumerate(self.thetas):
            if abs(row[0] - theta[0]) < 1e-12 and abs(row[1] - theta[1]) < 1e-12:
                return index
        raise GridMismatchError(f"MGF argument {tuple(theta)} was not simulated")

    def tail_rows(self) -> Iterator[tuple[float, float, float, float]]:
        """(direction_c1, x, tail_estimate, ci_halfwidth) rows."""
        estimate, halfwidth = self.estimate("tail_time")
        for k, direction in enumerate(self.directions):
            for g, x in enumerate(self.grid):
                yield (
                    direction[0],
                    float(x),
                    float(estimate[k, g]),
                    float(halfwidth[k, g]),
                )

    def d0(self, derived: DerivedQuantities) -> float:
        """mu1 mu2 (1 - p12 p21) pi(0) / (delta1 delta2) from the empty fraction."""
        mu1, mu2 = derived.mu
        d1, d2 = derived.delta
        return mu1 * mu2 * (1.0 - derived.p12 * derived.p21) * self.empty_fraction / (d1 * d2)

    @classmethod
    def merge(cls, parts: Sequence[PathStats]) -> PathStats:
        """Pool paths from distinct seeds; the result is independent of order."""
        if not parts:
            raise ValueError("Nothing to merge")
        first = parts[0]
        seen: set[int] = set()
        for part in parts:
            if seen & set(part.seeds):
                raise ValueError(f"Seed(s) {sorted(seen & set(part.seeds))} merged twice")
            seen |= set(part.seeds)
            if (
                part.arrival_kind != first.arrival_kind
                or part.directions != first.directions
                or not np.array_equal(part.grid, first.grid)
                or not np.array_equal(part.thetas, first.thetas)
            ):
                raise GridMismatchError("Paths were simulated on different grids")

        ordered = sorted(parts, key=lambda p: min(p.seeds))
        batch_seeds = [s for part in ordered for s in part.batch_seeds]

        def stack(field: str) -> np.ndarray:
            return np.concatenate([np.asarray(getattr(p, field)) for p in ordered])

        return cls(
            seeds=sorted(seen),
            arrival_kind=first.arrival_kind,
            grid=first.grid,
            directions=first.directions,
            thetas=first.thetas,
            batch_seeds=batch_seeds,
            batch_time=stack("batch_time"),
            tail_time=stack("tail_time"),
            y_inc=stack("y_inc"),
            empty_time=stack("empty_time"),
            palm_tail=stack("palm_tail"),
            palm_atom=stack("palm_atom"),
            boundary_time=stack("boundary_time"),
            mgf=stack("mgf"),
            palm_mgf=stack("palm_mgf"),
            edge_mgf=stack("edge_mgf"),
            max_reflection_residual=max(p.max_reflection_residual for p in parts),
            max_complementarity=max(p.max_complementarity for p in parts),
            min_z=min(p.min_z for p in parts),
            events=sum(p.events for p in parts),
        )


class MajorantStats(BaseModel):
    """Tails of the parallel-queue majorant and its dominance record."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    seeds: list[int]
    grid: Array
    batch_time: Array
    tail_time: Array
    epochs_checked: int
    dominance_violations: int
    max_shortfall: float

    @property
    def dominance(self) -> bool:
        return self.dominance_violations == 0

    def estimate(self) -> tuple[np.ndarray, np.ndarray]:
        """(2, G) tail estimates of each majorant coordinate and halfwidths."""
        return batch_means(np.asarray(self.tail_time), self.batch_time)

    @classmethod
    def merge(cls, parts: Sequence[MajorantStats]) -> MajorantStats:
        if not parts:
            raise ValueError("Nothing to merge")
        ordered = sorted(parts, key=lambda p: min(p.seeds))
        seeds = [s for part in ordered for s in part.seeds]
        if len(set(seeds)) != len(seeds):
            raise ValueError("A seed was merged twice")
        if any(not np.array_equal(p.grid, ordered[0].grid) for p in ordered):
            raise GridMismatchError("Majorant paths were simulated on different grids")
        return cls(
            seeds=sorted(seeds),
            grid=ordered[0].grid,
            batch_time=np.concatenate([p.batch_time for p in ordered]),
            tail_time=np.concatenate([p.tail_time for p in ordered]),
            epochs_checked=sum(p.epochs_checked for p in ordered),
            dominance_violations=sum(p.dominance_violations for p in ordered),
            max_shortfall=max(p.max_shortfall for p in ordered),
        )


class GridSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["log", "linear"] = "log"
    start: float = Field(gt=0)
    stop: float
    num: int = Field(ge=1)

    @model_validator(mode="after")
    def _check_range(self) -> GridSpec:
        if self.stop < self.start:
            raise ValueError(f"Grid stop {self.stop} is below start {self.start}")
        return self

    def values(self) -> np.ndarray:
        match self.kind:
            case "log":
                return np.geomspace(self.start, self.stop, self.num)
            case _:
                return np.linspace(self.start, self.stop, self.num)


class SimulateSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    horizon: float = Field(gt=0, allow_inf_nan=False)
    warmup: float | None = None
    seeds: list[int] = Field(min_length=1)
    workers: int = Field(default=1, ge=1)
    batches: int = Field(default=DEFAULT_BATCHES, ge=2)
    directions: list[Direction] = [(1.0, 0.0)]
    thetas: list[tuple[float, float]] = []
    majorant: bool = True
    grid: GridSpec

    @field_validator("directions", mode="before")
    @classmethod
    def _check_directions(cls, value: Sequence[Sequence[float]]) -> list[Direction]:
        return [as_direction(c) for c in value]

    @field_validator("thetas")
    @classmethod
    def _check_thetas(cls, value: list[tuple[float, float]]) -> list[tuple[float, float]]:
        for theta in value:
            if theta[0] > 0 or theta[1] > 0:
                raise ValueError(f"MGF arguments must be <= 0, got {theta}")
        return value

    @model_validator(mode="after")
    def _check_warmup(self) -> SimulateSection:
        if not 0 < self.effective_warmup < self.horizon:
            raise ValueError(
                f"Warmup must lie in (0, horizon), got {self.effective_warmup}"
            )
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("Seeds must be distinct")
        return self

    @property
    def effective_warmup(self) -> float:
        if self.warmup is None:
            return DEFAULT_WARMUP_FRACTION * self.horizon
        return self.warmup


class AnalysisSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    modes: list[BoundKind] = [BoundKind.geom_sum_exact, BoundKind.geom_sum_asymptotic]
    draws: int = Field(default=DEFAULT_DRAWS, ge=1000)
    seed: int = 0
    eta_reading: EtaReading = EtaReading.as_printed
    comparison_directions: list[Direction] = []

    @field_validator("comparison_directions", mode="before")
    @classmethod
    def _check_directions(cls, value: Sequence[Sequence[float]]) -> list[Direction]:
        return [as_direction(c) for c in value]


class OutputSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    dir: Path = Path("out")


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    schema_version: Literal[1] = CONFIG_SCHEMA_VERSION
    network: NetworkParams
    simulate: SimulateSection
    analysis: AnalysisSection = AnalysisSection()
    output: OutputSection = OutputSection()

    @computed_field
    @property
    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form; stable under key reordering.

        Output location and worker count do not change any number, so they
        are left out.
        """
        canonical = self.model_dump_json(
            exclude={"config_hash": True, "output": True, "simulate": {"workers"}}
        )
        ordered = _canonical_json(canonical)
        return hashlib.sha256(ordered.encode()).hexdigest()


def _canonical_json(text: str) -> str:
    return json.dumps(json.loads(text), sort_keys=True, separators=(",", ":"))


class RunManifest(BaseModel):
    config_hash: str
    version: str
    seeds: list[int]
    per_seed_files: dict[str, list[str]]
    merged_files: list[str]
    # Seconds for this run; kept out of manifest.json so reruns are byte-identical.
    wall_clock: float | None = Field(default=None, exclude=True)
    summary: dict[str, Any]
    dominance: bool | None = None
    invariant_failures: list[str] = []
