"""Closed-form network quantities, stability and direction classification."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
import logging
import math

from .distributions import as_direction
from .exceptions import StabilityError
from .models import (
    DerivedQuantities,
    DirectionCase,
    DirectionCoefficients,
    NetworkParams,
    Stability,
)

_LOGGER = logging.getLogger(__name__)

type Pair = tuple[float, float]
type RegimeKey = tuple[bool, bool]


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else math.inf


def derive(p: NetworkParams) -> DerivedQuantities:
    mu1, mu2 = p.mu
    p12, p21 = p.p12, p.p21
    rate = p.rate
    m1, m2 = p.jumps.marginal_means

    delta1 = mu1 - mu2 * p21
    delta2 = mu2 - mu1 * p12
    alpha1, alpha2 = rate * m1, rate * m2
    net1, net2 = delta1 - alpha1, delta2 - alpha2

    det = 1.0 - p12 * p21
    rho1 = (alpha1 + alpha2 * p21) / (mu1 * det)
    rho2 = (alpha2 + alpha1 * p12) / (mu2 * det)

    check1 = mu1 * (1.0 - rho1) - mu2 * p21 * (1.0 - rho2)
    check2 = mu2 * (1.0 - rho2) - mu1 * p12 * (1.0 - rho1)
    if abs(check1 - net1) > 1e-12 * max(1.0, abs(net1)) or abs(check2 - net2) > 1e-12 * max(
        1.0, abs(net2)
    ):
        _LOGGER.warning(
            "Net drain cross-check off by (%g, %g)", check1 - net1, check2 - net2
        )

    return DerivedQuantities(
        mu=(mu1, mu2),
        p12=p12,
        p21=p21,
        rate=rate,
        jump_means=(m1, m2),
        delta=(delta1, delta2),
        alpha=(alpha1, alpha2),
        net_drain=(net1, net2),
        net_drain_check=(check1, check2),
        rho=(rho1, rho2),
        r=(_ratio(alpha1, delta1), _ratio(alpha2, delta2)),
        r_prime=(
            _ratio(alpha1, delta1 + delta2 * p21),
            _ratio(alpha2, delta2 + delta1 * p12),
        ),
        reflection=((1.0, -p21), (-p12, 1.0)),
        reflection_inverse=((1.0 / det, p21 / det), (p12 / det, 1.0 / det)),
    )


def check_stability(d: DerivedQuantities) -> Stability:
    net1, net2 = d.net_drain
    if net1 > 0 and net2 > 0:
        return Stability.strongly_stable
    if net1 + net2 * d.p21 > 0 and net1 * d.p12 + net2 > 0:
        return Stability.stable
    return Stability.unstable


def classify_direction(d: DerivedQuantities, c: Sequence[float]) -> DirectionCoefficients:
    """Case and coefficients of a direction c under strong stability."""
    c1, c2 = as_direction(c)
    if check_stability(d) is not Stability.strongly_stable:
        raise StabilityError("Direction coefficients need a strongly stable network")

    first = c1 - d.p12 * c2
    second = c2 - d.p21 * c1
    if first >= 0 and second >= 0:
        case = DirectionCase.c0
    elif first >= 0:
        case = DirectionCase.c1
    elif second >= 0:
        case = DirectionCase.c2
    else:
        raise AssertionError(f"Direction {(c1, c2)} matches no case")

    if case is DirectionCase.c2:
        mirrored = classify_direction(d.swapped(), (c2, c1))
        return mirrored.model_copy(
            update={
                "direction": (c1, c2),
                "case": DirectionCase.c2,
                "eta": (mirrored.eta[1], mirrored.eta[0]),
                "d": (mirrored.d[1], mirrored.d[0]) if mirrored.d else None,
            }
        )

    delta1, delta2 = d.delta
    alpha1, alpha2 = d.alpha
    net1, net2 = d.net_drain
    m1, m2 = d.jump_means
    c_alpha = c1 * alpha1 + c2 * alpha2
    c_net = c1 * net1 + c2 * net2
    r_c = c_alpha / (c1 * delta1 + c2 * delta2)
    eta = (first / c_net, second / c_net)

    r_c_prime = None
    d_coeffs = None
    if case is DirectionCase.c1:
        span = c1 * (delta1 + delta2 * d.p21)
        r_c_prime = c_alpha / span
        scale = span * (1.0 - r_c_prime)
        d_coeffs = (
            (delta1 * first + delta2 * (d.p21 * c1 - c2)) / scale,
            delta2 * (d.p21 * c1 - c2) / scale,
        )

    return DirectionCoefficients(
        direction=(c1, c2),
        case=case,
        r_c=r_c,
        r_c_prime=r_c_prime,
        eta=eta,
        m_c=c1 * m1 + c2 * m2,
        d=d_coeffs,
    )


def reduce_continuous_input(p: NetworkParams, beta1: float, beta2: float) -> NetworkParams:
    """Fold continuous inputs beta into slower release rates."""
    if beta1 < 0 or beta2 < 0:
        raise ValueError(f"Continuous input rates must be >= 0, got {(beta1, beta2)}")
    det = 1.0 - p.p12 * p.p21
    mu1 = p.mu1 * (1.0 - (beta1 + beta2 * p.p21) / det)
    mu2 = p.mu2 * (1.0 - (beta2 + beta1 * p.p12) / det)
    if mu1 <= 0 or mu2 <= 0:
        raise ValueError(f"Reduced release rates must stay positive, got {(mu1, mu2)}")
    return p.model_copy(update={"mu1": mu1, "mu2": mu2})


@dataclass(frozen=True, slots=True)
class Regime:
    """Between-jump rates of one busy/empty pattern.

    ``slope`` is dz/dt, ``regulator`` is dy/dt. ``busy`` marks the nodes
    actually releasing at full rate, which may differ from the requested
    pattern when an empty node cannot absorb its inflow.
    """

    slope: Pair
    regulator: Pair
    busy: tuple[bool, bool]


def _outflows(
    mu: Pair, p12: float, p21: float, inflow: Pair, busy: tuple[bool, bool]
) -> Pair:
    a1, a2 = inflow
    match busy:
        case (True, True):
            return mu
        case (True, False):
            return (mu[0], a2 + p12 * mu[0])
        case (False, True):
            return (a1 + p21 * mu[1], mu[1])
        case _:
            det = 1.0 - p12 * p21
            return ((a1 + p21 * a2) / det, (a2 + p12 * a1) / det)


def regime(
    mu: Pair, p12: float, p21: float, inflow: Pair, requested: tuple[bool, bool]
) -> Regime:
    """Outflow balance for a requested busy pattern.

    A busy node releases mu_i. An empty node passes its inflow straight
    through while that stays within mu_i and refills otherwise.
    """
    busy = requested
    for _ in range(3):
        out = _outflows(mu, p12, p21, inflow, busy)
        overflow = tuple(not busy[i] and out[i] > mu[i] for i in range(2))
        if not any(overflow):
            break
        busy = (busy[0] or overflow[0], busy[1] or overflow[1])
    a1, a2 = inflow
    slope = (a1 + p21 * out[1] - out[0], a2 + p12 * out[0] - out[1])
    regulator = (
        0.0 if busy[0] else mu[0] - out[0],
        0.0 if busy[1] else mu[1] - out[1],
    )
    return Regime(slope=slope, regulator=regulator, busy=busy)


def regime_table(d: DerivedQuantities, inflow: Pair = (0.0, 0.0)) -> dict[RegimeKey, Regime]:
    """Regimes for every (z1 > 0, z2 > 0) pattern at the given input rates."""
    return {
        (b1, b2): regime(d.mu, d.p12, d.p21, inflow, (b1, b2))
        for b1 in (False, True)
        for b2 in (False, True)
    }


def drift(
    z: Sequence[float], d: DerivedQuantities, inflow: Pair = (0.0, 0.0)
) -> tuple[Pair, Pair]:
    """(dz/dt, dy/dt) at state z between jumps."""
    if z[0] < 0 or z[1] < 0:
        raise ValueError(f"State must be nonnegative, got {tuple(z)}")
    entry = regime(d.mu, d.p12, d.p21, inflow, (z[0] > 0, z[1] > 0))
    return entry.slope, entry.regulator


def require_simulable(d: DerivedQuantities, directions: Sequence[Sequence[float]]) -> Stability:
    """Gate a simulation request on the stability class.

    Strong stability permits every direction. Plain stability only permits
    coordinate marginals whose own net drain is positive.
    """
    stability = check_stability(d)
    match stability:
        case Stability.unstable:
            raise StabilityError(f"Network is unstable (net drain {d.net_drain})")
        case Stability.stable:
            for c in directions:
                c1, c2 = as_direction(c)
                node = 0 if c1 == 1.0 else 1 if c2 == 1.0 else None
                if node is None or not d.net_drain[node] > 0:
                    raise StabilityError(
                        f"Direction {(c1, c2)} needs strong stability; "
                        f"net drain is {d.net_drain}"
                    )
            _LOGGER.warning(
                "Network is stable but not strongly stable; only marginal tails are estimated"
            )
    return stability
