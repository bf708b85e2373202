"""Jump-size laws: tails, integrated tails, geometric compound sums.

Every law is an immutable pydantic model. Tail, excess and quantile methods
accept a float or a numpy array and answer in kind; samplers take an
explicit ``numpy.random.Generator`` so workers never share RNG state.
"""

from __future__ import annotations

from collections.abc import Sequence
from enum import StrEnum
import logging
import math
from typing import Annotated, Any, Literal, Protocol

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    SerializeAsAny,
    field_validator,
    model_validator,
)
from scipy import integrate, optimize, special
from scipy.optimize import elementwise

from .const import (
    INVERSION_MAX_DOUBLINGS,
    INVERSION_MAX_ITER,
    INVERSION_XATOL,
    QUAD_EPSABS,
    QUAD_RTOL,
)
from .exceptions import NumericalInversionError

_LOGGER = logging.getLogger(__name__)

type Direction = tuple[float, float]
type FloatOrArray = float | np.ndarray


def _out(x: Any, result: Any) -> FloatOrArray:
    """Return a float for scalar input, an array otherwise."""
    if np.ndim(x) == 0:
        return float(result)
    return np.asarray(result, dtype=float)


def as_direction(c: Sequence[float]) -> Direction:
    """Validate a directional vector: c >= 0 with c1 + c2 = 1."""
    if len(c) != 2:
        raise ValueError(f"Direction must have two components, got {c!r}")
    c1, c2 = float(c[0]), float(c[1])
    if c1 < 0 or c2 < 0 or abs(c1 + c2 - 1.0) > 1e-12:
        raise ValueError(f"Direction must be nonnegative and sum to 1, got {c!r}")
    return (c1, c2)


class TailClass(StrEnum):
    """Heavy or light classification of a family's right tail."""

    subexponential = "subexponential"
    light = "light"

    @property
    def heavy(self) -> bool:
        return self is TailClass.subexponential


class TailLaw(Protocol):
    """Anything with a survival function, a stop-loss transform and a mean."""

    @property
    def mean(self) -> float: ...

    def tail(self, x: FloatOrArray) -> FloatOrArray: ...

    def excess(self, x: FloatOrArray) -> FloatOrArray: ...

    def integrated_quantile(self, q: FloatOrArray) -> FloatOrArray | None: ...

    def sample_integrated_many(self, rng: np.random.Generator, n: int) -> np.ndarray: ...


class _Family(BaseModel):
    model_config = ConfigDict(frozen=True)

    @property
    def mean(self) -> float:
        raise NotImplementedError

    @property
    def second_moment(self) -> float:
        """E J^2, infinite when the tail is too heavy."""
        raise NotImplementedError

    @property
    def tail_class(self) -> TailClass:
        return TailClass.subexponential

    def tail(self, x: FloatOrArray) -> FloatOrArray:
        raise NotImplementedError

    def quantile(self, u: FloatOrArray) -> FloatOrArray:
        raise NotImplementedError

    def excess(self, x: FloatOrArray) -> FloatOrArray:
        """Stop-loss transform: the integral of the tail over (x, inf)."""
        raise NotImplementedError

    def integrated_quantile(self, q: FloatOrArray) -> FloatOrArray | None:
        """Closed-form x with integrated tail equal to q, or None."""
        return None

    def mgf(self, theta: float) -> float:
        """E exp(theta J) for theta <= 0, through the tail integral."""
        if theta > 0:
            raise ValueError(f"Jump MGF is only used for theta <= 0, got {theta}")
        if theta == 0:
            return 1.0
        value, _ = integrate.quad(
            lambda x: math.exp(theta * x) * self.tail(x),
            0.0,
            math.inf,
            epsabs=QUAD_EPSABS,
            epsrel=QUAD_RTOL,
            limit=200,
        )
        return 1.0 + theta * value

    def sample(self, rng: np.random.Generator) -> float:
        return float(self.quantile(rng.random()))

    def sample_many(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.asarray(self.quantile(rng.random(n)), dtype=float)

    def sample_integrated_many(self, rng: np.random.Generator, n: int) -> np.ndarray:
        q = 1.0 - rng.random(n)
        closed = self.integrated_quantile(q)
        if closed is not None:
            return np.asarray(closed, dtype=float)
        return _invert_integrated_many(self, q)


class Pareto(_Family):
    """Classical Pareto law on [scale, inf) with tail (scale/x)^index."""

    family: Literal["pareto"] = "pareto"
    scale: float = Field(gt=0)
    index: float = Field(gt=1, description="k <= 1 has an infinite mean")

    @property
    def mean(self) -> float:
        return self.index * self.scale / (self.index - 1.0)

    @property
    def second_moment(self) -> float:
        if self.index <= 2:
            return math.inf
        return self.index * self.scale**2 / (self.index - 2.0)

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        return _out(x, (self.scale / np.maximum(x, self.scale)) ** self.index)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        return _out(u, self.scale * (1.0 - u) ** (-1.0 / self.index))

    def excess(self, x):
        x = np.asarray(x, dtype=float)
        k, s = self.index, self.scale
        beyond = s**k * np.maximum(x, s) ** (1.0 - k) / (k - 1.0)
        return _out(x, np.where(x < s, self.mean - x, beyond))

    def integrated_quantile(self, q):
        q = np.asarray(q, dtype=float)
        k, s, m = self.index, self.scale, self.mean
        with np.errstate(divide="ignore"):
            beyond = s * (k * q) ** (-1.0 / (k - 1.0))
        return _out(q, np.where(q >= 1.0 - s / m, m * (1.0 - q), beyond))


class Weibull(_Family):
    """Weibull law; heavy (subexponential) only for shape < 1."""

    family: Literal["weibull"] = "weibull"
    scale: float = Field(gt=0)
    shape: float = Field(gt=0)

    @property
    def mean(self) -> float:
        return self.scale * math.gamma(1.0 + 1.0 / self.shape)

    @property
    def second_moment(self) -> float:
        return self.scale**2 * math.gamma(1.0 + 2.0 / self.shape)

    @property
    def tail_class(self) -> TailClass:
        return TailClass.subexponential if self.shape < 1 else TailClass.light

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        return _out(x, np.exp(-((np.maximum(x, 0.0) / self.scale) ** self.shape)))

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        return _out(u, self.scale * (-np.log1p(-u)) ** (1.0 / self.shape))

    def excess(self, x):
        x = np.asarray(x, dtype=float)
        z = (np.maximum(x, 0.0) / self.scale) ** self.shape
        return _out(x, self.mean * special.gammaincc(1.0 / self.shape, z))

    def integrated_quantile(self, q):
        q = np.asarray(q, dtype=float)
        z = special.gammainccinv(1.0 / self.shape, q)
        return _out(q, self.scale * z ** (1.0 / self.shape))


class Lognormal(_Family):
    """Lognormal law: log J is normal with mean log_mean and std log_std."""

    family: Literal["lognormal"] = "lognormal"
    log_mean: float
    log_std: float = Field(gt=0)

    @property
    def mean(self) -> float:
        return math.exp(self.log_mean + 0.5 * self.log_std**2)

    @property
    def second_moment(self) -> float:
        return math.exp(2.0 * self.log_mean + 2.0 * self.log_std**2)

    def _d2(self, x: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return (self.log_mean - np.log(np.maximum(x, 0.0))) / self.log_std

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        return _out(x, special.ndtr(self._d2(x)))

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        return _out(u, np.exp(self.log_mean + self.log_std * special.ndtri(u)))

    def excess(self, x):
        x = np.asarray(x, dtype=float)
        d2 = self._d2(x)
        below = special.ndtr(d2 + self.log_std)
        return _out(x, self.mean * below - np.maximum(x, 0.0) * special.ndtr(d2))


class Exponential(_Family):
    family: Literal["exponential"] = "exponential"
    rate: float = Field(gt=0)

    @property
    def mean(self) -> float:
        return 1.0 / self.rate

    @property
    def second_moment(self) -> float:
        return 2.0 / self.rate**2

    @property
    def tail_class(self) -> TailClass:
        return TailClass.light

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        return _out(x, np.exp(-self.rate * np.maximum(x, 0.0)))

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        return _out(u, -np.log1p(-u) / self.rate)

    def excess(self, x):
        return _out(x, np.asarray(self.tail(x)) / self.rate)

    def integrated_quantile(self, q):
        q = np.asarray(q, dtype=float)
        with np.errstate(divide="ignore"):
            return _out(q, -np.log(q) / self.rate)

    def mgf(self, theta: float) -> float:
        if theta > 0:
            raise ValueError(f"Jump MGF is only used for theta <= 0, got {theta}")
        return self.rate / (self.rate - theta)


class Deterministic(_Family):
    family: Literal["deterministic"] = "deterministic"
    value: float = Field(ge=0)

    @property
    def mean(self) -> float:
        return self.value

    @property
    def second_moment(self) -> float:
        return self.value**2

    @property
    def tail_class(self) -> TailClass:
        return TailClass.light

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        return _out(x, np.where(x < self.value, 1.0, 0.0))

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        return _out(u, np.full_like(u, self.value))

    def excess(self, x):
        x = np.asarray(x, dtype=float)
        return _out(x, np.maximum(self.value - x, 0.0))

    def integrated_quantile(self, q):
        q = np.asarray(q, dtype=float)
        return _out(q, self.value * (1.0 - q))

    def mgf(self, theta: float) -> float:
        if theta > 0:
            raise ValueError(f"Jump MGF is only used for theta <= 0, got {theta}")
        return math.exp(theta * self.value)


type HeavyDist = Annotated[
    Pareto | Weibull | Lognormal | Exponential | Deterministic,
    Field(discriminator="family"),
]


def _convolution_tail(
    first: HeavyDist, c1: float, second: HeavyDist, c2: float, x: float
) -> float:
    """P(c1 X + c2 Y > x) for independent X ~ first, Y ~ second, c1, c2 > 0.

    Integrates the conditional tail of c2 Y over the quantile of c1 X, split
    at the larger of the two scaled means and at the point where c1 X alone
    exceeds x.
    """
    if isinstance(second, Deterministic) and not isinstance(first, Deterministic):
        first, c1, second, c2 = second, c2, first, c1

    def integrand(u: float) -> float:
        rest = x - c1 * float(first.quantile(u))
        return 1.0 if rest < 0 else float(second.tail(rest / c2))

    split = max(c1 * first.mean, c2 * second.mean)
    points = sorted(
        {
            1.0 - float(first.tail(min(split, x) / c1)),
            1.0 - float(first.tail(x / c1)),
        }
        - {0.0, 1.0}
    )
    value, _ = integrate.quad(
        integrand,
        0.0,
        1.0,
        points=points or None,
        epsabs=QUAD_EPSABS,
        epsrel=QUAD_RTOL,
        limit=200,
    )
    return min(max(value, 0.0), 1.0)


def _convolution_excess(
    first: HeavyDist, c1: float, second: HeavyDist, c2: float, x: float
) -> float:
    """E(c1 X + c2 Y - x)^+ for independent X, Y and c1, c2 > 0."""

    def integrand(u: float) -> float:
        rest = x - c1 * float(first.quantile(u))
        if rest < 0:
            return c2 * second.mean - rest
        return c2 * float(second.excess(rest / c2))

    point = 1.0 - float(first.tail(x / c1))
    value, _ = integrate.quad(
        integrand,
        0.0,
        1.0,
        points=[point] if 0.0 < point < 1.0 else None,
        epsabs=QUAD_EPSABS,
        epsrel=QUAD_RTOL,
        limit=200,
    )
    return max(value, 0.0)


class IndependentJumps(BaseModel):
    """Independent coordinates: J1 ~ dist1 and J2 ~ dist2."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["independent"] = "independent"
    dist1: HeavyDist
    dist2: HeavyDist

    @property
    def marginal_means(self) -> tuple[float, float]:
        return (self.dist1.mean, self.dist2.mean)

    def mgf(self, theta: Sequence[float]) -> float:
        return self.dist1.mgf(theta[0]) * self.dist2.mgf(theta[1])

    def sample_many(
        self, rng: np.random.Generator, n: int
    ) -> tuple[np.ndarray, np.ndarray]:
        return self.dist1.sample_many(rng, n), self.dist2.sample_many(rng, n)

    def swapped(self) -> IndependentJumps:
        return IndependentJumps(dist1=self.dist2, dist2=self.dist1)


class MixtureJumps(BaseModel):
    """One-dimensional jumps: (J1, 0) w.p. p1 and (0, J2) w.p. p2."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["mixture"] = "mixture"
    p1: float = Field(gt=0, lt=1)
    p2: float = Field(gt=0, lt=1)
    dist1: HeavyDist
    dist2: HeavyDist

    @model_validator(mode="after")
    def _check_weights(self) -> MixtureJumps:
        if abs(self.p1 + self.p2 - 1.0) > 1e-12:
            raise ValueError(f"p1 + p2 must equal 1, got {self.p1} + {self.p2}")
        return self

    @property
    def marginal_means(self) -> tuple[float, float]:
        return (self.p1 * self.dist1.mean, self.p2 * self.dist2.mean)

    def mgf(self, theta: Sequence[float]) -> float:
        return self.p1 * self.dist1.mgf(theta[0]) + self.p2 * self.dist2.mgf(theta[1])

    def sample_many(
        self, rng: np.random.Generator, n: int
    ) -> tuple[np.ndarray, np.ndarray]:
        first = rng.random(n) < self.p1
        sizes1 = self.dist1.sample_many(rng, n)
        sizes2 = self.dist2.sample_many(rng, n)
        return np.where(first, sizes1, 0.0), np.where(first, 0.0, sizes2)

    def swapped(self) -> MixtureJumps:
        return MixtureJumps(p1=self.p2, p2=self.p1, dist1=self.dist2, dist2=self.dist1)


type JumpModel = Annotated[IndependentJumps | MixtureJumps, Field(discriminator="kind")]


class DirectionalJumpDist(BaseModel):
    """The law of c1 J1 + c2 J2 for a joint jump model and a direction c."""

    model_config = ConfigDict(frozen=True)

    jumps: JumpModel
    direction: Direction

    @field_validator("direction", mode="before")
    @classmethod
    def _check_direction(cls, value: Sequence[float]) -> Direction:
        return as_direction(value)

    @property
    def mean(self) -> float:
        m1, m2 = self.jumps.marginal_means
        c1, c2 = self.direction
        return c1 * m1 + c2 * m2

    def _tail_scalar(self, x: float) -> float:
        c1, c2 = self.direction
        jumps = self.jumps
        if isinstance(jumps, MixtureJumps):
            total = 0.0
            if c1 > 0:
                total += jumps.p1 * float(jumps.dist1.tail(x / c1))
            if c2 > 0:
                total += jumps.p2 * float(jumps.dist2.tail(x / c2))
            return total
        if c2 == 0:
            return float(jumps.dist1.tail(x / c1))
        if c1 == 0:
            return float(jumps.dist2.tail(x / c2))
        return _convolution_tail(jumps.dist1, c1, jumps.dist2, c2, x)

    def _excess_scalar(self, x: float) -> float:
        c1, c2 = self.direction
        jumps = self.jumps
        if isinstance(jumps, MixtureJumps):
            total = 0.0
            if c1 > 0:
                total += jumps.p1 * c1 * float(jumps.dist1.excess(x / c1))
            if c2 > 0:
                total += jumps.p2 * c2 * float(jumps.dist2.excess(x / c2))
            return total
        if c2 == 0:
            return c1 * float(jumps.dist1.excess(x / c1))
        if c1 == 0:
            return c2 * float(jumps.dist2.excess(x / c2))
        return _convolution_excess(jumps.dist1, c1, jumps.dist2, c2, x)

    def tail(self, x):
        return _out(x, np.vectorize(self._tail_scalar, otypes=[float])(x))

    def excess(self, x):
        return _out(x, np.vectorize(self._excess_scalar, otypes=[float])(x))

    def integrated_quantile(self, q: FloatOrArray) -> FloatOrArray | None:
        return None

    def sample_many(self, rng: np.random.Generator, n: int) -> np.ndarray:
        j1, j2 = self.jumps.sample_many(rng, n)
        c1, c2 = self.direction
        return c1 * j1 + c2 * j2

    def sample_integrated_many(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Exact draws from the integrated tail of c1 J1 + c2 J2.

        The A2 mixture's integrated tail is a mixture of the scaled component
        integrated tails. For an independent sum X + Y it is X^I with
        probability m_X / (m_X + m_Y), and X + Y^I otherwise.
        """
        c1, c2 = self.direction
        jumps = self.jumps
        pick = rng.random(n)
        if isinstance(jumps, MixtureJumps):
            w1 = jumps.p1 * c1 * jumps.dist1.mean
            w2 = jumps.p2 * c2 * jumps.dist2.mean
            first = pick < w1 / (w1 + w2)
            x1 = c1 * jumps.dist1.sample_integrated_many(rng, n)
            x2 = c2 * jumps.dist2.sample_integrated_many(rng, n)
            return np.where(first, x1, x2)
        mx, my = c1 * jumps.dist1.mean, c2 * jumps.dist2.mean
        own = pick < mx / (mx + my)
        x_integrated = c1 * jumps.dist1.sample_integrated_many(rng, n)
        x_plain = c1 * jumps.dist1.sample_many(rng, n)
        y_integrated = c2 * jumps.dist2.sample_integrated_many(rng, n)
        return np.where(own, x_integrated, x_plain + y_integrated)


class IntegratedTailDist(BaseModel):
    """F^I: tail (1/m) * integral of the base tail over (x, inf)."""

    model_config = ConfigDict(frozen=True)

    base: SerializeAsAny[_Family] | DirectionalJumpDist

    @model_validator(mode="after")
    def _check_mean(self) -> IntegratedTailDist:
        m = self.base.mean
        if not math.isfinite(m) or m <= 0:
            raise ValueError(f"Integrated tail needs a finite positive mean, got {m}")
        return self

    @property
    def normalizer(self) -> float:
        return self.base.mean

    @property
    def mean(self) -> float:
        """E J^2 / (2 m) for a family base; the tail integral otherwise."""
        if isinstance(self.base, _Family):
            return self.base.second_moment / (2.0 * self.normalizer)
        value, _ = integrate.quad(
            lambda x: float(self.tail(x)),
            0.0,
            math.inf,
            epsabs=QUAD_EPSABS,
            epsrel=QUAD_RTOL,
            limit=200,
        )
        return value

    def tail(self, x: FloatOrArray) -> FloatOrArray:
        x_arr = np.asarray(x, dtype=float)
        return _out(x, np.clip(np.asarray(self.base.excess(x_arr)) / self.normalizer, 0.0, 1.0))

    def quantile(self, u: float) -> float:
        """x with F^I(x) = u: closed form where available, else bisection."""
        q = 1.0 - u
        closed = self.base.integrated_quantile(q)
        if closed is not None:
            return float(closed)
        return _invert_tail(self.tail, q)

    def sample(self, rng: np.random.Generator) -> float:
        return self.quantile(float(rng.random()))

    def sample_many(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.base.sample_integrated_many(rng, n)


def _invert_tail(tail_fn, q: float) -> float:
    """Smallest-bracket bisection for tail_fn(x) = q on a doubling bracket."""
    if q >= 1.0:
        return 0.0
    if q <= 0.0:
        return math.inf
    hi = 1.0
    for _ in range(INVERSION_MAX_DOUBLINGS):
        if float(tail_fn(hi)) < q:
            break
        hi *= 2.0
    else:
        raise NumericalInversionError(f"No bracket found for tail level {q}")
    try:
        return float(
            optimize.bisect(
                lambda x: float(tail_fn(x)) - q,
                0.0,
                hi,
                xtol=INVERSION_XATOL,
                maxiter=INVERSION_MAX_ITER,
            )
        )
    except (RuntimeError, ValueError) as err:
        raise NumericalInversionError(f"Bisection failed for tail level {q}") from err


def _invert_integrated_many(law: TailLaw, q: np.ndarray) -> np.ndarray:
    """Vectorized inversion of the integrated tail of ``law`` at levels q."""
    m = law.mean

    def residual(x: np.ndarray) -> np.ndarray:
        return np.asarray(law.excess(x)) / m - q

    hi = np.ones_like(q)
    for _ in range(INVERSION_MAX_DOUBLINGS):
        open_ = residual(hi) >= 0
        if not open_.any():
            break
        hi = np.where(open_, 2.0 * hi, hi)
    else:
        raise NumericalInversionError("No bracket found for some integrated-tail levels")
    result = elementwise.find_root(
        residual,
        (np.zeros_like(q), hi),
        tolerances={"xatol": INVERSION_XATOL},
        maxiter=INVERSION_MAX_ITER,
    )
    if not np.all(result.success):
        raise NumericalInversionError("Integrated-tail inversion did not converge")
    return np.asarray(result.x, dtype=float)


class GeometricSumSpec(BaseModel):
    """Sum of N ~ Geometric(r) (support 0, 1, ...) i.i.d. F^I summands."""

    model_config = ConfigDict(frozen=True)

    r: float = Field(gt=0, lt=1)
    summand: IntegratedTailDist


def tail(d: HeavyDist, x: float) -> float:
    """P(J > x)."""
    if x < 0:
        raise ValueError(f"Tail is evaluated at x >= 0, got {x}")
    return float(d.tail(x))


def excess(d: HeavyDist, x: float) -> float:
    if x < 0:
        raise ValueError(f"Excess is evaluated at x >= 0, got {x}")
    return float(d.excess(x))


def integrated_tail(d: HeavyDist | DirectionalJumpDist) -> IntegratedTailDist:
    return IntegratedTailDist(base=d)


def sample(d: HeavyDist, rng: np.random.Generator) -> float:
    return d.sample(rng)


def sample_integrated(it: IntegratedTailDist, rng: np.random.Generator) -> float:
    return it.sample(rng)


def geometric_count(r: float, rng: np.random.Generator, size: int | None = None):
    """N with P(N = n) = (1 - r) r^n, n = 0, 1, ..."""
    return rng.geometric(1.0 - r, size) - 1


def geometric_sum_sample(g: GeometricSumSpec, rng: np.random.Generator) -> float:
    n = int(geometric_count(g.r, rng))
    return math.fsum(g.summand.sample(rng) for _ in range(n))


def geometric_sum_samples(
    g: GeometricSumSpec, rng: np.random.Generator, size: int
) -> np.ndarray:
    """Vectorized draws of the geometric compound sum."""
    counts = geometric_count(g.r, rng, size)
    summands = g.summand.sample_many(rng, int(counts.sum()))
    owners = np.repeat(np.arange(size), counts)
    return np.bincount(owners, weights=summands, minlength=size)


def geometric_sum_tail_asymptotic(g: GeometricSumSpec, x: float) -> float:
    """(r / (1 - r)) F^I tail at x: the subexponential geometric-sum asymptote."""
    if x < 0:
        raise ValueError(f"Tail is evaluated at x >= 0, got {x}")
    return g.r / (1.0 - g.r) * float(g.summand.tail(x))


def empirical_tail(
    samples: np.ndarray, grid: Sequence[float]
) -> tuple[np.ndarray, np.ndarray]:
    """P(S > x) on a grid with binomial standard errors."""
    ordered = np.sort(samples)
    n = ordered.size
    above = n - np.searchsorted(ordered, np.asarray(grid, dtype=float), side="right")
    estimate = above / n
    return estimate, np.sqrt(estimate * (1.0 - estimate) / n)


def directional_tail(j: DirectionalJumpDist, x: float) -> float:
    if x < 0:
        raise ValueError(f"Tail is evaluated at x >= 0, got {x}")
    return float(j.tail(x))


def subexponentiality_diagnostic(
    d: HeavyDist, grid: Sequence[float]
) -> list[tuple[float, float]]:
    """P(X1 + X2 > x) / (2 P(X > x)) along an increasing grid.

    Subexponential families trend to 1; a diagnostic, not a gate.
    """
    xs = [float(x) for x in grid]
    if any(x < 0 for x in xs) or any(b <= a for a, b in zip(xs, xs[1:], strict=False)):
        raise ValueError("Diagnostic grid must be nonnegative and increasing")
    report: list[tuple[float, float]] = []
    for x in xs:
        single = float(d.tail(x))
        if single == 0.0:
            _LOGGER.debug("Tail vanishes at x=%s, diagnostic stops", x)
            break
        pair = _convolution_tail(d, 1.0, d, 1.0, x) if x > 0 else 1.0
        report.append((x, pair / (2.0 * single)))
    return report


def long_tail_ratio(d: HeavyDist, x: float) -> float:
    """F(x + 1) / F(x) for the tail F; tends to 1 for long-tailed laws."""
    single = float(d.tail(x))
    return float(d.tail(x + 1.0)) / single if single > 0 else math.nan


def tail_class(d: HeavyDist) -> TailClass:
    return d.tail_class


def jump_mgf(jumps: IndependentJumps | MixtureJumps, theta: Sequence[float]) -> float:
    """E exp(<theta, J>) for theta <= 0 componentwise."""
    if theta[0] > 0 or theta[1] > 0:
        raise ValueError(f"Jump MGF is only used for theta <= 0, got {tuple(theta)}")
    return jumps.mgf(theta)
