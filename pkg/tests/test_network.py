"""Tests for closed-form network quantities, stability and direction cases."""

from __future__ import annotations

import numpy as np
from pydantic import ValidationError
import pytest

from fluidnet.distributions import Exponential, IndependentJumps, MixtureJumps
from fluidnet.exceptions import StabilityError
from fluidnet.models import DirectionCase, NetworkParams, PoissonArrivals, Stability
from fluidnet.network import (
    check_stability,
    classify_direction,
    derive,
    drift,
    reduce_continuous_input,
    regime,
    regime_table,
    require_simulable,
)

from .conftest import symmetric_network


def test_derive_symmetric(symmetric_derived):
    d = symmetric_derived
    assert d.delta == (1.0, 1.0)
    assert d.alpha == (0.5, 0.5)
    assert d.net_drain == (0.5, 0.5)
    assert d.rho == pytest.approx((0.5, 0.5))
    assert d.r[0] == pytest.approx(0.5)
    assert d.r_prime[0] == pytest.approx(1.0 / 3.0)
    assert d.boundary_rates == pytest.approx((1.0, 1.0))
    assert d.net_drain_check == pytest.approx(d.net_drain)


def test_derive_is_symmetric_and_pure(symmetric_params):
    first = derive(symmetric_params)
    second = derive(symmetric_params)
    assert first.model_dump_json() == second.model_dump_json()
    assert first.r[0] == first.r[1]
    assert first.swapped() == first


def test_derive_asymmetric():
    params = NetworkParams(
        mu1=2.0,
        mu2=1.0,
        p12=0.0,
        p21=0.5,
        arrival=PoissonArrivals(rate=1.0),
        jumps=IndependentJumps(dist1=Exponential(rate=2.0), dist2=Exponential(rate=4.0)),
    )
    d = derive(params)
    assert d.delta == (1.5, 1.0)
    assert d.net_drain == pytest.approx((1.0, 0.75))
    assert d.rho[0] == pytest.approx(0.3125)


def test_reference_network(reference_derived):
    d = reference_derived
    assert d.jump_means[0] == pytest.approx(5.0 / 6.0)
    assert d.net_drain == pytest.approx((1.0 / 6.0, 1.0 / 6.0))
    assert d.r[0] == pytest.approx(5.0 / 6.0)
    assert d.r_prime[0] == pytest.approx(5.0 / 9.0)
    assert check_stability(d) is Stability.strongly_stable


def test_stability_classes(symmetric_derived, stable_params, unstable_params):
    assert check_stability(symmetric_derived) is Stability.strongly_stable

    stable = derive(stable_params)
    assert stable.net_drain == pytest.approx((-0.1, 0.5))
    assert check_stability(stable) is Stability.stable

    unstable = derive(unstable_params)
    assert unstable.net_drain == pytest.approx((-1.0, 0.1))
    assert check_stability(unstable) is Stability.unstable
    assert not Stability.unstable.simulable


def test_zero_net_drain_is_unstable():
    # alpha = 1 = delta at both nodes.
    params = symmetric_network(
        jumps=MixtureJumps(p1=0.5, p2=0.5, dist1=Exponential(rate=0.5), dist2=Exponential(rate=0.5))
    )
    assert check_stability(derive(params)) is Stability.unstable


def test_routing_must_be_substochastic():
    with pytest.raises(ValidationError):
        symmetric_network(p12=1.0)


def test_classify_balanced_direction(symmetric_derived):
    dc = classify_direction(symmetric_derived, (0.5, 0.5))
    assert dc.case is DirectionCase.c0
    assert dc.eta == pytest.approx((0.5, 0.5))
    assert dc.r_c == pytest.approx(0.5)
    assert dc.r_c_prime is None
    assert dc.d is None


def test_classify_marginal_directions(symmetric_derived):
    first = classify_direction(symmetric_derived, (1.0, 0.0))
    assert first.case is DirectionCase.c1
    assert first.r_c == pytest.approx(symmetric_derived.r[0])
    assert first.r_c_prime == pytest.approx(symmetric_derived.r_prime[0])
    assert first.eta == pytest.approx((2.0, -1.0))
    assert first.d == pytest.approx((1.5, 0.5))

    second = classify_direction(symmetric_derived, (0.0, 1.0))
    assert second.case is DirectionCase.c2
    assert second.direction == (0.0, 1.0)
    assert second.eta == pytest.approx((-1.0, 2.0))


def test_classify_partitions_the_simplex(symmetric_derived):
    p = symmetric_derived.p12
    for c1 in np.linspace(0.0, 1.0, 101):
        c = (float(c1), float(1.0 - c1))
        case = classify_direction(symmetric_derived, c).case
        if c[0] - p * c[1] < 0:
            assert case is DirectionCase.c2
        elif c[1] - p * c[0] < 0:
            assert case is DirectionCase.c1
        else:
            assert case is DirectionCase.c0
    # c1 / c2 = p12 sits on the C0 side.
    assert classify_direction(symmetric_derived, (1 / 3, 2 / 3)).case is DirectionCase.c0


def test_c0_eta_normalization(reference_derived):
    d = reference_derived
    for c1 in (0.4, 0.5, 0.6):
        dc = classify_direction(d, (c1, 1.0 - c1))
        assert dc.case is DirectionCase.c0
        total = dc.eta[0] * d.boundary_rates[0] + dc.eta[1] * d.boundary_rates[1]
        assert total == pytest.approx(1.0, abs=1e-12)


def test_classify_needs_strong_stability(stable_params):
    with pytest.raises(StabilityError):
        classify_direction(derive(stable_params), (0.5, 0.5))


def test_reduce_continuous_input(symmetric_params):
    reduced = reduce_continuous_input(symmetric_params, 0.3, 0.0)
    assert reduced.mu == pytest.approx((1.2, 1.6))
    assert reduced.jumps == symmetric_params.jumps
    assert reduce_continuous_input(symmetric_params, 0.0, 0.0) == symmetric_params
    balanced = reduce_continuous_input(symmetric_params, 0.2, 0.2)
    assert balanced.mu1 == balanced.mu2
    with pytest.raises(ValueError, match="positive"):
        reduce_continuous_input(symmetric_params, 0.9, 0.0)


@pytest.mark.parametrize(
    ("z", "slope", "regulator"),
    [
        ((5.0, 5.0), (-1.0, -1.0), (0.0, 0.0)),
        ((5.0, 0.0), (-1.5, 0.0), (0.0, 1.0)),
        ((0.0, 5.0), (0.0, -1.5), (1.0, 0.0)),
        ((0.0, 0.0), (0.0, 0.0), (2.0, 2.0)),
    ],
)
def test_drift(symmetric_derived, z, slope, regulator):
    got_slope, got_regulator = drift(z, symmetric_derived)
    assert got_slope == pytest.approx(slope)
    assert got_regulator == pytest.approx(regulator)


def test_drift_satisfies_reflection_identity(symmetric_derived):
    d = symmetric_derived
    reflection = np.array(d.reflection)
    for z in [(5.0, 5.0), (5.0, 0.0), (0.0, 5.0), (0.0, 0.0)]:
        slope, regulator = drift(z, d)
        np.testing.assert_allclose(
            np.array(slope), -np.array(d.delta) + reflection @ np.array(regulator), atol=1e-12
        )


def test_drift_rejects_negative_state(symmetric_derived):
    with pytest.raises(ValueError):
        drift((-1.0, 0.0), symmetric_derived)


def test_empty_node_refills_when_inflow_exceeds_capacity():
    # Node 1 cannot pass node 2's output 0.5 * 4 = 2 > mu1 = 1.
    entry = regime((1.0, 4.0), 0.1, 0.5, (0.0, 0.0), (False, True))
    assert entry.busy == (True, True)
    assert entry.slope[0] == pytest.approx(1.0)
    assert entry.regulator == (0.0, 0.0)


def test_regime_table_with_inputs_passes_flow_through(symmetric_derived):
    table = regime_table(symmetric_derived, inflow=symmetric_derived.alpha)
    empty = table[(False, False)]
    assert empty.slope == pytest.approx((0.0, 0.0))
    assert empty.regulator == pytest.approx(symmetric_derived.boundary_rates)
    assert table[(True, True)].slope == pytest.approx((-0.5, -0.5))


def test_require_simulable(symmetric_derived, stable_params, unstable_params):
    assert require_simulable(symmetric_derived, [(0.5, 0.5)]) is Stability.strongly_stable

    stable = derive(stable_params)
    assert require_simulable(stable, [(0.0, 1.0)]) is Stability.stable
    with pytest.raises(StabilityError):
        require_simulable(stable, [(1.0, 0.0)])
    with pytest.raises(StabilityError):
        require_simulable(stable, [(0.5, 0.5)])

    with pytest.raises(StabilityError, match="unstable"):
        require_simulable(derive(unstable_params), [(1.0, 0.0)])
