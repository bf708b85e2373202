"""Tests for jump laws, integrated tails and geometric sums."""

from __future__ import annotations

import math

import numpy as np
from pydantic import ValidationError
import pytest
from scipy import integrate

from fluidnet.distributions import (
    Deterministic,
    DirectionalJumpDist,
    Exponential,
    GeometricSumSpec,
    IndependentJumps,
    IntegratedTailDist,
    Lognormal,
    MixtureJumps,
    Pareto,
    TailClass,
    Weibull,
    as_direction,
    directional_tail,
    empirical_tail,
    excess,
    geometric_count,
    geometric_sum_sample,
    geometric_sum_samples,
    geometric_sum_tail_asymptotic,
    integrated_tail,
    jump_mgf,
    long_tail_ratio,
    sample,
    subexponentiality_diagnostic,
    tail,
    tail_class,
)


@pytest.mark.parametrize(
    ("dist", "x", "expected"),
    [
        (Pareto(scale=1.0, index=2.0), 0.0, 1.0),
        (Pareto(scale=1.0, index=2.0), 10.0, 0.01),
        (Exponential(rate=1.0), math.log(2.0), 0.5),
        (Deterministic(value=1.0), 0.5, 1.0),
        (Deterministic(value=1.0), 1.0, 0.0),
    ],
)
def test_tail_closed_forms(dist, x, expected):
    assert tail(dist, x) == pytest.approx(expected)


def test_tail_rejects_negative_level():
    with pytest.raises(ValueError, match="x >= 0"):
        tail(Exponential(rate=1.0), -1.0)
    with pytest.raises(ValueError):
        excess(Exponential(rate=1.0), -0.5)


def test_tail_accepts_arrays():
    values = Pareto(scale=1.0, index=2.0).tail(np.array([0.5, 2.0, 4.0]))
    np.testing.assert_allclose(values, [1.0, 0.25, 0.0625])


@pytest.mark.parametrize(
    "dist",
    [
        Pareto(scale=1.0, index=2.5),
        Weibull(scale=1.0, shape=0.5),
        Lognormal(log_mean=0.0, log_std=1.0),
        Exponential(rate=2.0),
    ],
)
def test_excess_matches_quadrature(dist):
    for x in (0.3, 2.0, 7.5):
        numeric, _ = integrate.quad(lambda u: float(dist.tail(u)), x, math.inf, limit=400)
        assert float(dist.excess(x)) == pytest.approx(numeric, rel=1e-5)


def test_integrated_tail_closed_forms():
    assert IntegratedTailDist(base=Pareto(scale=1.0, index=3.0)).tail(2.0) == pytest.approx(
        1.0 / 12.0
    )
    exponential = integrated_tail(Exponential(rate=1.0))
    for x in (0.0, 0.7, 3.0):
        assert exponential.tail(x) == pytest.approx(math.exp(-x))
    assert integrated_tail(Deterministic(value=1.0)).tail(0.5) == pytest.approx(0.5)


def test_integrated_tail_of_pareto_follows_power_law():
    it = integrated_tail(Pareto(scale=1.0, index=2.5))
    assert it.tail(50.0) == pytest.approx(50.0**-1.5 / 2.5)


def test_integrated_tail_needs_positive_mean():
    with pytest.raises(ValidationError, match="finite positive mean"):
        IntegratedTailDist(base=Deterministic(value=0.0))


def test_pareto_index_must_exceed_one():
    with pytest.raises(ValidationError):
        Pareto(scale=1.0, index=1.0)


def test_quantiles_invert_tails():
    pareto = Pareto(scale=1.0, index=2.0)
    assert pareto.quantile(0.25) == pytest.approx(2.0 / math.sqrt(3.0))
    assert pareto.tail(pareto.quantile(0.25)) == pytest.approx(0.75)
    assert Exponential(rate=2.0).quantile(1.0 - math.exp(-2.0)) == pytest.approx(1.0)
    assert Deterministic(value=3.0).sample(np.random.default_rng(0)) == 3.0


def test_integrated_quantiles():
    assert integrated_tail(Exponential(rate=1.0)).quantile(0.5) == pytest.approx(math.log(2.0))
    assert integrated_tail(Pareto(scale=1.0, index=3.0)).quantile(11.0 / 12.0) == pytest.approx(
        2.0
    )
    assert integrated_tail(Deterministic(value=1.0)).quantile(0.5) == pytest.approx(0.5)


def test_lognormal_integrated_quantile_uses_bisection():
    it = integrated_tail(Lognormal(log_mean=0.0, log_std=0.8))
    x = it.quantile(0.7)
    assert it.tail(x) == pytest.approx(0.3, abs=1e-8)


def test_integrated_sampler_matches_integrated_tail():
    it = integrated_tail(Lognormal(log_mean=0.0, log_std=0.8))
    draws = it.sample_many(np.random.default_rng(3), 40_000)
    estimate, se = empirical_tail(draws, [0.5, 1.5, 3.0])
    np.testing.assert_allclose(estimate, it.tail(np.array([0.5, 1.5, 3.0])), atol=4 * se.max())


def test_sampling_is_deterministic_per_seed():
    dist = Weibull(scale=1.0, shape=0.5)
    first = dist.sample_many(np.random.default_rng(11), 100)
    second = dist.sample_many(np.random.default_rng(11), 100)
    np.testing.assert_array_equal(first, second)
    assert sample(dist, np.random.default_rng(11)) == pytest.approx(first[0])


def test_sample_mean_converges():
    draws = Exponential(rate=0.5).sample_many(np.random.default_rng(1), 200_000)
    assert draws.mean() == pytest.approx(2.0, abs=0.03)


@pytest.mark.parametrize(
    "dist",
    [
        Pareto(scale=1.0, index=2.5),
        Weibull(scale=1.0, shape=0.5),
        Weibull(scale=2.0, shape=1.5),
        Lognormal(log_mean=0.0, log_std=1.0),
        Exponential(rate=2.0),
        Deterministic(value=1.5),
    ],
)
def test_mean_is_integral_of_tail(dist):
    # Split at the median so quad sees the bulk and the tail separately.
    median = float(dist.quantile(0.5))
    body, _ = integrate.quad(lambda u: float(dist.tail(u)), 0.0, median, epsrel=1e-10, limit=400)
    rest, _ = integrate.quad(
        lambda u: float(dist.tail(u)), median, math.inf, epsrel=1e-10, limit=400
    )
    assert body + rest == pytest.approx(dist.mean, rel=1e-6)
    assert float(dist.excess(0.0)) == pytest.approx(dist.mean, rel=1e-9)


@pytest.mark.parametrize(
    ("smaller", "larger"),
    [
        (Pareto(scale=1.0, index=2.5), Pareto(scale=2.0, index=2.5)),
        (Weibull(scale=1.0, shape=0.5), Weibull(scale=3.0, shape=0.5)),
        (Lognormal(log_mean=0.0, log_std=1.0), Lognormal(log_mean=0.5, log_std=1.0)),
        (Exponential(rate=2.0), Exponential(rate=1.0)),
        (Deterministic(value=1.0), Deterministic(value=2.0)),
    ],
)
def test_common_uniforms_give_ordered_draws(smaller, larger):
    u = np.random.default_rng(17).random(2_000)
    low = np.asarray(smaller.quantile(u))
    high = np.asarray(larger.quantile(u))
    assert (low <= high).all()
    assert (np.diff(np.asarray(smaller.quantile(np.sort(u)))) >= 0).all()


@pytest.mark.parametrize(
    ("jumps", "direction"),
    [
        (
            MixtureJumps(
                p1=0.4, p2=0.6, dist1=Pareto(scale=1.0, index=2.5), dist2=Weibull(scale=1.0, shape=0.5)
            ),
            (0.5, 0.5),
        ),
        (
            MixtureJumps(
                p1=0.5, p2=0.5, dist1=Lognormal(log_mean=0.0, log_std=1.0), dist2=Exponential(rate=1.0)
            ),
            (0.2, 0.8),
        ),
        (IndependentJumps(dist1=Exponential(rate=1.0), dist2=Exponential(rate=2.0)), (0.5, 0.5)),
        (
            IndependentJumps(dist1=Pareto(scale=1.0, index=2.5), dist2=Exponential(rate=1.0)),
            (0.3, 0.7),
        ),
    ],
)
def test_directional_tail_is_non_increasing(jumps, direction):
    law = DirectionalJumpDist(jumps=jumps, direction=direction)
    values = np.array([directional_tail(law, x) for x in np.linspace(0.0, 15.0, 31)])
    assert values[0] <= 1.0
    assert (np.diff(values) <= 1e-10).all()


def test_scalar_geometric_sum_sample_repeats_per_seed():
    spec = GeometricSumSpec(r=0.6, summand=integrated_tail(Pareto(scale=1.0, index=2.5)))

    def draws(seed: int) -> list[float]:
        rng = np.random.default_rng(seed)
        return [geometric_sum_sample(spec, rng) for _ in range(200)]

    first = draws(21)
    assert first == draws(21)
    assert first != draws(22)
    assert any(value > 0 for value in first)


def test_geometric_count_starts_at_zero():
    counts = geometric_count(0.5, np.random.default_rng(2), 100_000)
    assert counts.min() == 0
    assert (counts == 0).mean() == pytest.approx(0.5, abs=0.01)


def test_geometric_sum_wald_mean():
    spec = GeometricSumSpec(r=0.5, summand=integrated_tail(Deterministic(value=1.0)))
    draws = geometric_sum_samples(spec, np.random.default_rng(4), 200_000)
    assert draws.mean() == pytest.approx(0.5, abs=0.01)


def test_geometric_sum_of_exponentials_has_exponential_tail():
    spec = GeometricSumSpec(r=0.5, summand=integrated_tail(Exponential(rate=1.0)))
    draws = geometric_sum_samples(spec, np.random.default_rng(5), 200_000)
    estimate, _ = empirical_tail(draws, [0.0, 2.0])
    assert estimate[0] == pytest.approx(0.5, abs=0.004)
    assert estimate[1] == pytest.approx(0.5 * math.exp(-1.0), abs=0.004)


def test_scalar_geometric_sum_sample_is_nonnegative():
    spec = GeometricSumSpec(r=0.3, summand=integrated_tail(Exponential(rate=1.0)))
    rng = np.random.default_rng(6)
    draws = [geometric_sum_sample(spec, rng) for _ in range(500)]
    assert min(draws) == 0.0
    assert all(value >= 0 for value in draws)


def test_geometric_sum_tail_asymptotic():
    pareto3 = integrated_tail(Pareto(scale=1.0, index=3.0))
    # r / (1 - r) = 3 and the integrated tail at 10 is (1/3)(1/10)^2.
    assert geometric_sum_tail_asymptotic(
        GeometricSumSpec(r=0.75, summand=pareto3), 10.0
    ) == pytest.approx(0.01)

    exponential = integrated_tail(Exponential(rate=1.0))
    x = math.log(2.0)
    assert geometric_sum_tail_asymptotic(
        GeometricSumSpec(r=0.1, summand=exponential), x
    ) == pytest.approx(0.5 / 9.0)
    with pytest.raises(ValueError):
        geometric_sum_tail_asymptotic(GeometricSumSpec(r=0.1, summand=exponential), -1.0)


def test_geometric_sum_tail_asymptotic_agrees_with_monte_carlo():
    spec = GeometricSumSpec(r=0.75, summand=integrated_tail(Pareto(scale=1.0, index=3.0)))
    draws = geometric_sum_samples(spec, np.random.default_rng(8), 400_000)
    estimate, se = empirical_tail(draws, [30.0])
    predicted = geometric_sum_tail_asymptotic(spec, 30.0)
    # Pre-asymptotic at x = 30: the sum sits above its first-order form.
    assert 0.8 * predicted < estimate[0] < 2.5 * predicted
    assert se[0] > 0


def test_geometric_sum_rejects_bad_ratio():
    with pytest.raises(ValidationError):
        GeometricSumSpec(r=1.0, summand=integrated_tail(Exponential(rate=1.0)))


def test_directional_tail_of_mixture():
    jumps = MixtureJumps(
        p1=0.5, p2=0.5, dist1=Pareto(scale=1.0, index=2.0), dist2=Pareto(scale=1.0, index=2.0)
    )
    x = math.sqrt(5.0)
    first_only = DirectionalJumpDist(jumps=jumps, direction=(1.0, 0.0))
    assert directional_tail(first_only, x) == pytest.approx(0.5 * 0.2)

    balanced = DirectionalJumpDist(jumps=jumps, direction=(0.5, 0.5))
    assert directional_tail(balanced, 2.0) == pytest.approx(0.0625)


def test_directional_tail_of_independent_exponentials():
    jumps = IndependentJumps(dist1=Exponential(rate=1.0), dist2=Exponential(rate=1.0))
    balanced = DirectionalJumpDist(jumps=jumps, direction=(0.5, 0.5))
    assert directional_tail(balanced, 1.0) == pytest.approx(3.0 * math.exp(-2.0), rel=1e-5)


def test_directional_integrated_tail_sampler():
    jumps = IndependentJumps(dist1=Exponential(rate=1.0), dist2=Exponential(rate=2.0))
    it = integrated_tail(DirectionalJumpDist(jumps=jumps, direction=(0.5, 0.5)))
    draws = it.sample_many(np.random.default_rng(9), 60_000)
    grid = np.array([0.2, 0.8, 1.6])
    estimate, se = empirical_tail(draws, grid)
    np.testing.assert_allclose(estimate, it.tail(grid), atol=4 * se.max())


def test_direction_validation():
    assert as_direction([0.25, 0.75]) == (0.25, 0.75)
    with pytest.raises(ValueError, match="sum to 1"):
        as_direction([0.5, 0.6])
    with pytest.raises(ValueError):
        as_direction([1.0])


def test_subexponentiality_diagnostic():
    pareto = subexponentiality_diagnostic(Pareto(scale=1.0, index=2.0), [0.0, 100.0, 1000.0])
    assert pareto[0] == (0.0, 0.5)
    assert 0.95 <= pareto[-1][1] <= 1.05

    exponential = subexponentiality_diagnostic(Exponential(rate=1.0), [20.0])
    assert exponential[0][1] == pytest.approx(10.5, rel=1e-3)

    with pytest.raises(ValueError, match="increasing"):
        subexponentiality_diagnostic(Exponential(rate=1.0), [2.0, 1.0])


def test_tail_classes():
    assert tail_class(Pareto(scale=1.0, index=2.5)) is TailClass.subexponential
    assert tail_class(Weibull(scale=1.0, shape=0.5)).heavy
    assert not tail_class(Weibull(scale=1.0, shape=1.5)).heavy
    assert tail_class(Exponential(rate=1.0)) is TailClass.light
    assert long_tail_ratio(Pareto(scale=1.0, index=2.0), 1000.0) == pytest.approx(1.0, abs=0.01)
    assert long_tail_ratio(Exponential(rate=1.0), 1000.0) == pytest.approx(math.exp(-1.0))


def test_jump_mgf():
    mixture = MixtureJumps(
        p1=0.5, p2=0.5, dist1=Exponential(rate=1.0), dist2=Exponential(rate=1.0)
    )
    assert jump_mgf(mixture, (0.0, 0.0)) == 1.0
    assert jump_mgf(mixture, (-1.0, -1.0)) == pytest.approx(0.5)
    independent = IndependentJumps(dist1=Exponential(rate=1.0), dist2=Deterministic(value=2.0))
    assert jump_mgf(independent, (-1.0, -0.5)) == pytest.approx(0.5 * math.exp(-1.0))
    with pytest.raises(ValueError, match="theta <= 0"):
        jump_mgf(mixture, (0.5, 0.0))


def test_quadrature_mgf_matches_closed_form():
    pareto = Pareto(scale=1.0, index=3.0)
    draws = pareto.sample_many(np.random.default_rng(12), 400_000)
    assert pareto.mgf(-0.5) == pytest.approx(np.exp(-0.5 * draws).mean(), abs=2e-3)


def test_mixture_weights_must_sum_to_one():
    with pytest.raises(ValidationError, match="p1 \\+ p2"):
        MixtureJumps(p1=0.4, p2=0.5, dist1=Exponential(rate=1.0), dist2=Exponential(rate=1.0))


def test_mixture_jumps_are_one_dimensional():
    jumps = MixtureJumps(
        p1=0.3, p2=0.7, dist1=Exponential(rate=1.0), dist2=Exponential(rate=1.0)
    )
    j1, j2 = jumps.sample_many(np.random.default_rng(13), 50_000)
    assert not ((j1 > 0) & (j2 > 0)).any()
    assert (j1 > 0).mean() == pytest.approx(0.3, abs=0.01)
    assert jumps.swapped().p1 == 0.7
