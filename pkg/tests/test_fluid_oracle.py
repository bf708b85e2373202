"""Tests for the deterministic fluid drain model and its Euler oracle."""

from __future__ import annotations

import math

import numpy as np
from pydantic import ValidationError
import pytest

from fluidnet.exceptions import StabilityError
from fluidnet.fluid_oracle import (
    big_jump_thresholds,
    equivalence_suite,
    fluid_level,
    integrate_fluid,
    reachability,
    single_jump_condition,
    single_jump_level,
)
from fluidnet.models import BigJumpEvent, FluidState
from fluidnet.network import derive


def test_reachability_worked_case(symmetric_derived):
    fs = FluidState(y1=2.4, y2=0.5, t=2.0)
    # (t D2 - y2)^+ = 0.5, so the level is 2.4 - 1 - 0.25.
    assert fluid_level(fs.y1, fs.y2, fs.t, symmetric_derived, (1.0, 0.0)) == pytest.approx(1.15)
    assert reachability(fs, symmetric_derived, (1.0, 0.0), 1.15 - 1e-9)
    assert not reachability(fs, symmetric_derived, (1.0, 0.0), 1.15 + 1e-9)


def test_reachability_boundary_is_inclusive(symmetric_derived):
    t, x = 2.0, 3.0
    d1, d2 = symmetric_derived.net_drain
    fs = FluidState(y1=x + t * d1 + symmetric_derived.p21 * t * d2, y2=0.0, t=t)
    assert fluid_level(fs.y1, fs.y2, fs.t, symmetric_derived, (1.0, 0.0)) == pytest.approx(x)
    assert reachability(fs, symmetric_derived, (1.0, 0.0), x - 1e-12)


def test_reachability_when_node_two_outlasts_the_window(symmetric_derived):
    # y2 >= t D2: the condition reduces to y1 >= x + t D1.
    t = 2.0
    for y1 in (1.5, 2.0, 4.0):
        fs = FluidState(y1=y1, y2=5.0, t=t)
        expected = y1 - t * symmetric_derived.net_drain[0] >= 0.5
        assert reachability(fs, symmetric_derived, (1.0, 0.0), 0.5) is expected


def test_reachability_is_monotone(symmetric_derived):
    rng = np.random.default_rng(0)
    for _ in range(500):
        y1, y2 = rng.uniform(0.0, 4.0, 2)
        t = rng.uniform(0.1, 4.0)
        x = rng.uniform(0.0, 2.0)
        c1 = rng.uniform()
        c = (c1, 1.0 - c1)
        base = reachability(FluidState(y1=y1, y2=y2, t=t), symmetric_derived, c, x)
        if base:
            assert reachability(FluidState(y1=y1 + 0.1, y2=y2, t=t), symmetric_derived, c, x)
            assert reachability(FluidState(y1=y1, y2=y2 + 0.1, t=t), symmetric_derived, c, x)
        else:
            assert not reachability(
                FluidState(y1=y1, y2=y2, t=t + 0.1), symmetric_derived, c, x
            )
            assert not reachability(
                FluidState(y1=y1, y2=y2, t=t), symmetric_derived, c, x + 0.1
            )


def test_reachability_guards(symmetric_derived, stable_params):
    fs = FluidState(y1=1.0, y2=1.0, t=1.0)
    with pytest.raises(ValueError, match="x must be >= 0"):
        reachability(fs, symmetric_derived, (1.0, 0.0), -1.0)
    with pytest.raises(StabilityError):
        reachability(fs, derive(stable_params), (1.0, 0.0), 0.5)
    with pytest.raises(ValidationError):
        FluidState(y1=1.0, y2=1.0, t=0.0)


def test_single_jump_form_matches_reachability_when_one_node_is_empty(symmetric_derived):
    rng = np.random.default_rng(1)
    for _ in range(500):
        fs = FluidState(y1=rng.uniform(0.0, 6.0), y2=0.0, t=rng.uniform(0.1, 4.0))
        c1 = rng.uniform(0.05, 1.0)
        c = (c1, 1.0 - c1)
        x = rng.uniform(0.01, 3.0)
        level = fluid_level(fs.y1, fs.y2, fs.t, symmetric_derived, c)
        if level > 0:
            assert single_jump_level(fs, symmetric_derived, c) == pytest.approx(level)
        if not math.isclose(level, x):
            assert single_jump_condition(fs, symmetric_derived, c, x) == reachability(
                fs, symmetric_derived, c, x
            )


def test_single_jump_condition_is_strict(symmetric_derived):
    fs = FluidState(y1=3.0, y2=0.0, t=1.0)
    level = single_jump_level(fs, symmetric_derived, (1.0, 0.0))
    assert level == pytest.approx(2.25)
    assert not single_jump_condition(fs, symmetric_derived, (1.0, 0.0), level)


def test_euler_in_the_interior(symmetric_derived):
    z = integrate_fluid(FluidState(y1=5.0, y2=6.0, t=2.0), symmetric_derived, dt=2e-4)
    assert z == pytest.approx((4.0, 5.0), abs=1e-9)


def test_euler_empty_stays_empty(symmetric_derived):
    z = integrate_fluid(FluidState(y1=0.0, y2=0.0, t=2.0), symmetric_derived, dt=2e-4)
    assert z == (0.0, 0.0)


def test_euler_matches_closed_form_after_a_node_empties(symmetric_derived):
    fs = FluidState(y1=2.4, y2=0.5, t=2.0)
    z = integrate_fluid(fs, symmetric_derived, dt=2e-4)
    assert z[0] == pytest.approx(1.15, abs=1e-3)
    assert z[1] == 0.0


@pytest.mark.slow
def test_fine_euler_matches_closed_form(symmetric_derived):
    z = integrate_fluid(FluidState(y1=2.4, y2=0.5, t=2.0), symmetric_derived, dt=2e-6)
    assert z[0] == pytest.approx(1.15, rel=1e-4)


def test_euler_step_must_be_small(symmetric_derived):
    with pytest.raises(ValueError, match="Step"):
        integrate_fluid(FluidState(y1=1.0, y2=1.0, t=1.0), symmetric_derived, dt=0.01)


def test_big_jump_thresholds(symmetric_derived):
    events = big_jump_thresholds(symmetric_derived, 1.0, (1.0, 0.0), 10.0, 4)
    assert len(events) == 5
    first, second = events[4]
    assert first.threshold == pytest.approx(13.0)
    assert second.threshold == math.inf
    assert first.node == 1 and first.n == 4
    thresholds = [pair[0].threshold for pair in events]
    assert thresholds == sorted(thresholds)


def test_big_jump_thresholds_symmetric(symmetric_derived):
    events = big_jump_thresholds(symmetric_derived, 0.5, (0.5, 0.5), 10.0, 6)
    assert (events[0][0].threshold, events[0][1].threshold) == (20.0, 20.0)
    for first, second in events:
        assert first.threshold == second.threshold
    with pytest.raises(ValueError, match="n_max"):
        big_jump_thresholds(symmetric_derived, 1.0, (0.5, 0.5), 10.0, 0)


def test_big_jump_event_occurs():
    event = BigJumpEvent(node=2, n=1, threshold=3.0)
    assert event.occurs((0.0, 3.5))
    assert not event.occurs((10.0, 3.0))


def test_drain_times():
    assert FluidState(y1=1.0, y2=3.0, t=1.0).drain_times((0.5, 1.5)) == (2.0, 2.0)


def test_equivalence_suite(symmetric_derived):
    report = equivalence_suite(symmetric_derived, tuples=2_000, seed=1, steps=2_000)
    assert report.total == 2_000
    assert report.other_disagreements == 0
    assert report.agreement_fraction >= 0.99


def test_equivalence_suite_on_reference(reference_derived):
    report = equivalence_suite(reference_derived, tuples=1_000, seed=2, steps=2_000)
    assert report.other_disagreements == 0


@pytest.mark.slow
def test_full_equivalence_suite(symmetric_derived):
    assert equivalence_suite(symmetric_derived).passed
