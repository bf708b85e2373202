"""Tail bounds, exact asymptotics and weak tail-equivalence reporting.

Every bound has two evaluation modes. ``geom_sum_exact`` samples the
geometric compound sums; ``geom_sum_asymptotic`` uses the subexponential
first-order form r / (1 - r) times the integrated tail, clamped at 1.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
import logging
import math
from typing import NamedTuple

import numpy as np

from .const import ADMISSIBLE_CI_FACTOR, DEFAULT_DRAWS
from .distributions import (
    DirectionalJumpDist,
    GeometricSumSpec,
    HeavyDist,
    IndependentJumps,
    IntegratedTailDist,
    MixtureJumps,
    as_direction,
    empirical_tail,
    geometric_sum_samples,
)
from .exceptions import CaseMismatchError, StabilityError
from .models import (
    BoundKind,
    BoundReport,
    DerivedQuantities,
    DirectionCase,
    DirectionCoefficients,
    EquivalenceReport,
    EtaReading,
    ExactAsymptote,
    PathStats,
    Stability,
)
from .network import check_stability, classify_direction

_LOGGER = logging.getLogger(__name__)

type Jumps = IndependentJumps | MixtureJumps
type TailEvaluator = Callable[[np.ndarray], np.ndarray]


def _component(jumps: Jumps, node: int) -> HeavyDist:
    return jumps.dist1 if node == 1 else jumps.dist2


def _clamp(values: np.ndarray) -> tuple[np.ndarray, list[bool]]:
    flags = [bool(v > 1.0) for v in values]
    return np.minimum(values, 1.0), flags


def _geometric_draws(
    r: float, summand: IntegratedTailDist, rng: np.random.Generator, draws: int
) -> np.ndarray:
    return geometric_sum_samples(GeometricSumSpec(r=r, summand=summand), rng, draws)


def theorem41_bounds(
    d: DerivedQuantities,
    dist: HeavyDist,
    grid: Sequence[float],
    mode: BoundKind,
    *,
    node: int = 1,
    seed: int = 0,
    draws: int = DEFAULT_DRAWS,
) -> BoundReport:
    """Geometric-sum sandwich for the marginal tail P(Z_node > x).

    ``dist`` is the jump law feeding node ``node``; for mixture jumps pass
    the component law, whose integrated tail equals the marginal's.
    """
    i = node - 1
    if check_stability(d) is Stability.unstable or not d.net_drain[i] > 0:
        raise StabilityError(
            f"Marginal bounds need a stable network with positive net drain at node {node}"
        )
    r, r_prime = d.r[i], d.r_prime[i]
    xs = np.asarray(grid, dtype=float)
    summand = IntegratedTailDist(base=dist)
    direction = (1.0, 0.0) if node == 1 else (0.0, 1.0)
    routing = d.p21 if node == 1 else d.p12
    case = DirectionCase.c0 if routing == 0 else (
        DirectionCase.c1 if node == 1 else DirectionCase.c2
    )
    constants = {
        "r": r,
        "r_prime": r_prime,
        "p_naive": d.alpha[i] / d.mu[i],
        "delta": d.delta[i],
        "net_drain": d.net_drain[i],
    }

    lower_se = upper_se = None
    match mode:
        case BoundKind.geom_sum_exact:
            rng = np.random.default_rng(seed)
            lower, lower_se = empirical_tail(_geometric_draws(r_prime, summand, rng, draws), xs)
            upper, upper_se = empirical_tail(_geometric_draws(r, summand, rng, draws), xs)
            flags = [False] * xs.size
        case BoundKind.geom_sum_asymptotic:
            tail_i = np.asarray(summand.tail(xs))
            lower, low_flags = _clamp(r_prime / (1.0 - r_prime) * tail_i)
            upper, high_flags = _clamp(r / (1.0 - r) * tail_i)
            flags = [a or b for a, b in zip(low_flags, high_flags, strict=True)]
            if any(flags):
                _LOGGER.warning("Asymptotic marginal bounds clamped at 1 for small x")

    return BoundReport(
        direction=direction,
        grid=xs,
        lower=lower,
        upper=upper,
        lower_se=lower_se,
        upper_se=upper_se,
        lower_kind=mode,
        upper_kind=mode,
        case=case,
        constants=constants,
        pre_asymptotic=flags,
    )


def theorem42_bounds(
    d: DerivedQuantities,
    dc: DirectionCoefficients,
    jumps: Jumps,
    grid: Sequence[float],
    mode: BoundKind,
    *,
    eta_reading: EtaReading = EtaReading.as_printed,
    seed: int = 0,
    draws: int = DEFAULT_DRAWS,
) -> BoundReport:
    """Directional sandwich for P(c1 Z1 + c2 Z2 > x) under strong stability."""
    actual = classify_direction(d, dc.direction)
    if actual.case is not dc.case:
        raise CaseMismatchError(
            f"Direction {dc.direction} is {actual.case}, not {dc.case}"
        )
    if dc.case is DirectionCase.c2:
        c1, c2 = dc.direction
        swapped = d.swapped()
        mirrored = theorem42_bounds(
            swapped,
            classify_direction(swapped, (c2, c1)),
            jumps.swapped(),
            grid,
            mode,
            eta_reading=eta_reading,
            seed=seed,
            draws=draws,
        )
        return mirrored.model_copy(
            update={"direction": dc.direction, "case": DirectionCase.c2}
        )

    c1, c2 = dc.direction
    xs = np.asarray(grid, dtype=float)
    delta1, delta2 = d.delta
    eta1, eta2 = dc.eta
    second_eta = eta1 if eta_reading is EtaReading.as_printed else eta2
    r_c = dc.r_c
    r_low = r_c if dc.case is DirectionCase.c0 else dc.r_c_prime
    assert r_low is not None

    f_c = IntegratedTailDist(base=DirectionalJumpDist(jumps=jumps, direction=(c1, c2)))
    f_1 = IntegratedTailDist(base=_component(jumps, 1))
    f_2 = IntegratedTailDist(base=_component(jumps, 2))

    # Upper bound: sum of coeff * P(c_j S_j + S_c > x) over the terms in play.
    terms: list[tuple[float, float, IntegratedTailDist, float]] = [
        (delta1 * eta1, c2, f_2, d.r[1])
    ]
    if dc.case is DirectionCase.c0:
        terms.append((delta2 * second_eta, c1, f_1, d.r[0]))

    constants = {
        "r_c": r_c,
        "r_lower": r_low,
        "eta1": eta1,
        "eta2": eta2,
        "delta1": delta1,
        "delta2": delta2,
        "m_c": dc.m_c,
    }
    if dc.r_c_prime is not None:
        constants["r_c_prime"] = dc.r_c_prime

    lower_se = upper_se = None
    match mode:
        case BoundKind.geom_sum_exact:
            rng = np.random.default_rng(seed)
            lower, lower_se = empirical_tail(_geometric_draws(r_low, f_c, rng, draws), xs)
            upper = np.zeros_like(xs)
            variance = np.zeros_like(xs)
            for coeff, scale, law, r_j in terms:
                own = _geometric_draws(r_c, f_c, rng, draws)
                if scale > 0:
                    own = own + scale * _geometric_draws(r_j, law, rng, draws)
                estimate, se = empirical_tail(own, xs)
                upper = upper + coeff * estimate
                variance = variance + (coeff * se) ** 2
            upper_se = np.sqrt(variance)
            flags = [False] * xs.size
        case BoundKind.geom_sum_asymptotic:
            tail_c = np.asarray(f_c.tail(xs))
            raw_lower = r_low / (1.0 - r_low) * tail_c
            raw_upper = np.zeros_like(xs)
            for coeff, scale, law, r_j in terms:
                piece = r_c / (1.0 - r_c) * tail_c
                if scale > 0:
                    piece = piece + r_j / (1.0 - r_j) * np.asarray(law.tail(xs / scale))
                raw_upper = raw_upper + coeff * piece
            lower, low_flags = _clamp(raw_lower)
            upper, high_flags = _clamp(raw_upper)
            flags = [a or b for a, b in zip(low_flags, high_flags, strict=True)]
            if any(flags):
                _LOGGER.warning(
                    "Asymptotic bounds for c=%s clamped at 1 for small x", dc.direction
                )

    return BoundReport(
        direction=(c1, c2),
        grid=xs,
        lower=lower,
        upper=upper,
        lower_se=lower_se,
        upper_se=upper_se,
        lower_kind=mode,
        upper_kind=mode,
        case=dc.case,
        constants=constants,
        pre_asymptotic=flags,
        eta_reading=eta_reading,
    )


def exact_asymptote(
    d: DerivedQuantities, jumps: Jumps, c: Sequence[float], mean_gap: float | None = None
) -> ExactAsymptote:
    """Two-term asymptote for one-dimensional mixture jumps.

    ``d`` must come from the same network, so alpha_i already equals
    rate * p_i * mean(F_i).
    """
    if not isinstance(jumps, MixtureJumps):
        raise ValueError("Exact asymptotics need one-dimensional mixture jumps")
    if check_stability(d) is not Stability.strongly_stable:
        raise StabilityError("Exact asymptotics need a strongly stable network")
    direction = as_direction(c)
    for dist in (jumps.dist1, jumps.dist2):
        if not dist.tail_class.heavy:
            _LOGGER.warning(
                "%s is not subexponential; the asymptote is not exact", dist.family
            )
    net1, net2 = d.net_drain
    span1 = net1 + d.p21 * net2
    span2 = net2 + d.p12 * net1
    return ExactAsymptote(
        direction=direction,
        coefficients=(d.alpha[0] / span1, d.alpha[1] / span2),
        weights=(jumps.p1, jumps.p2),
        spans=(span1, span2),
        mean_gap=1.0 / d.rate if mean_gap is None else mean_gap,
        dist1=jumps.dist1,
        dist2=jumps.dist2,
    )


def weak_equivalence_report(
    simulated: PathStats,
    reference: TailEvaluator,
    direction: Sequence[float] = (1.0, 0.0),
) -> EquivalenceReport:
    """Ratios of simulated to reference tails where the simulation resolves the tail."""
    k = simulated.direction_index(direction)
    estimate, halfwidth = simulated.estimate("tail_time")
    est, hw = estimate[k], halfwidth[k]
    grid = np.asarray(simulated.grid)
    admissible = (est > 0) & (est > ADMISSIBLE_CI_FACTOR * hw)
    if not admissible.any():
        return EquivalenceReport(
            ratios=[],
            admissible=False,
            message="insufficient tail resolution",
        )
    xs = grid[admissible]
    ref = np.asarray(reference(xs), dtype=float)
    ratios = est[admissible] / ref
    return EquivalenceReport(
        ratios=[(float(x), float(q)) for x, q in zip(xs, ratios, strict=True)],
        admissible=True,
        min_ratio=float(ratios.min()),
        max_ratio=float(ratios.max()),
    )


class RatioTrend(NamedTuple):
    slope: float
    first: float
    last: float
    toward_one: bool


def ratio_trend(report: EquivalenceReport, decades: float = 1.0) -> RatioTrend:
    """Linear fit of ratio against log10 x over the last ``decades`` of the grid."""
    if not report.admissible or not report.ratios:
        raise ValueError(report.message or "No admissible ratios")
    xs = np.array([x for x, _ in report.ratios])
    ratios = np.array([q for _, q in report.ratios])
    window = np.log10(xs) >= np.log10(xs[-1]) - decades
    logs, values = np.log10(xs[window]), ratios[window]
    if logs.size < 2:
        return RatioTrend(0.0, float(values[0]), float(values[0]), True)
    slope, intercept = np.polyfit(logs, values, 1)
    first = slope * logs[0] + intercept
    last = slope * logs[-1] + intercept
    return RatioTrend(
        slope=float(slope),
        first=float(first),
        last=float(last),
        toward_one=bool(abs(last - 1.0) <= abs(first - 1.0)),
    )


def weak_equivalence_constant(dc: DirectionCoefficients, d: DerivedQuantities) -> float:
    """K = (1 - r_c) m_c r1 / (r_c (1 - r1) c1 m1) + r_c / (1 - r_c)."""
    c1 = dc.direction[0]
    if c1 == 0:
        return math.inf
    r_c, r1, m1 = dc.r_c, d.r[0], d.jump_means[0]
    return (1.0 - r_c) * dc.m_c * r1 / (r_c * (1.0 - r1) * c1 * m1) + r_c / (1.0 - r_c)


class MarginalChain(NamedTuple):
    p_naive: float
    r_prime: float
    r: float

    @property
    def ordered(self) -> bool:
        return 0 < self.p_naive < self.r_prime < self.r < 1


def remark41_chain(d: DerivedQuantities, node: int = 1) -> MarginalChain:
    """alpha_i / mu_i < r'_i < r_i < 1 under strong stability."""
    i = node - 1
    return MarginalChain(d.alpha[i] / d.mu[i], d.r_prime[i], d.r[i])


def tightness_chain(d: DerivedQuantities, node: int = 1) -> tuple[float, float, float]:
    """r'_i / (1 - r'_i) < alpha_i / (Delta_i + p_ji Delta_j) < alpha_i / Delta_i."""
    i, j = node - 1, 2 - node
    routing = d.p21 if node == 1 else d.p12
    r_prime = d.r_prime[i]
    return (
        r_prime / (1.0 - r_prime),
        d.alpha[i] / (d.net_drain[i] + routing * d.net_drain[j]),
        d.alpha[i] / d.net_drain[i],
    )
