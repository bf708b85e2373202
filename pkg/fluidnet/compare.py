"""Join simulated tails with analytic bounds and emit criterion verdicts."""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass
from enum import StrEnum
import logging
import math
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import integrate, stats as sps

from .asymptotics import (
    exact_asymptote,
    ratio_trend,
    theorem41_bounds,
    theorem42_bounds,
    weak_equivalence_report,
)
from .const import (
    CONFIDENCE_LEVEL,
    EXIT_INVARIANT,
    EXIT_PASS,
    EXIT_STATISTICAL,
    QUAD_EPSABS,
    REFLECTION_TOLERANCE,
)
from .coordinator import load_manifest, load_merged, write_csv
from .distributions import (
    Direction,
    Exponential,
    GeometricSumSpec,
    HeavyDist,
    IntegratedTailDist,
    MixtureJumps,
    Pareto,
    geometric_sum_samples,
    subexponentiality_diagnostic,
)
from .exceptions import ConfigError, GridMismatchError
from .fluid_oracle import equivalence_suite
from .models import (
    BoundKind,
    BoundReport,
    DerivedQuantities,
    DirectionCase,
    ExperimentConfig,
    MajorantStats,
    NetworkParams,
    PathStats,
    PoissonArrivals,
    RenewalArrivals,
    Stability,
    batch_means,
)
from .network import check_stability, classify_direction, derive
from .simulator import balance_residual_with_error

_LOGGER = logging.getLogger(__name__)

SANDWICH_FLOOR = 1e-4
PALM_FLOOR = 1e-3
SLACK = 3.0
TREND_BAND = (0.7, 1.3)
SERIES_TOLERANCE = 0.05
SUBEXP_BAND = (0.95, 1.05)
LIGHT_RATIO_FLOOR = 2.0
MEAN_TOLERANCE = 1e-6

BOUNDS_HEADER = ("x", "lower", "upper", "mode", "case", "direction_c1")
VERDICTS_HEADER = ("key", "name", "kind", "status", "margin", "detail")


class CriterionKind(StrEnum):
    invariant = "invariant"
    statistical = "statistical"


class VerdictStatus(StrEnum):
    passed = "pass"
    failed = "fail"
    insufficient = "insufficient"
    skipped = "skipped"

    @property
    def blocking(self) -> bool:
        return self in (VerdictStatus.failed, VerdictStatus.insufficient)


class Verdict(BaseModel):
    model_config = ConfigDict(frozen=True)

    key: str
    name: str
    kind: CriterionKind
    status: VerdictStatus
    margin: float | None = None
    detail: str = ""


type Outcome = tuple[VerdictStatus, float | None, str]


@dataclass(frozen=True, slots=True)
class CompareContext:
    config: ExperimentConfig
    derived: DerivedQuantities
    stats: PathStats
    majorant: MajorantStats | None
    bounds: dict[tuple[Direction, BoundKind], BoundReport]


@dataclass(frozen=True, kw_only=True)
class CriterionDescription:
    """A class that describes one acceptance criterion."""

    key: str
    name: str
    kind: CriterionKind = CriterionKind.statistical
    check_fn: Callable[[CompareContext], Outcome]

    def evaluate(self, ctx: CompareContext) -> Verdict:
        status, margin, detail = self.check_fn(ctx)
        return Verdict(
            key=self.key,
            name=self.name,
            kind=self.kind,
            status=status,
            margin=margin,
            detail=detail,
        )


def _t_quantile(batches: int) -> float:
    return float(sps.t.ppf(0.5 + CONFIDENCE_LEVEL / 2.0, batches - 1))


def _pass_if(ok: bool) -> VerdictStatus:
    return VerdictStatus.passed if ok else VerdictStatus.failed


def _component(jumps, node: int) -> HeavyDist:
    return jumps.dist1 if node == 1 else jumps.dist2


def _check_reflection(ctx: CompareContext) -> Outcome:
    residual = ctx.stats.max_reflection_residual
    return (
        _pass_if(residual < REFLECTION_TOLERANCE and ctx.stats.max_complementarity < REFLECTION_TOLERANCE),
        REFLECTION_TOLERANCE - residual,
        f"max residual {residual:.3g}, complementarity {ctx.stats.max_complementarity:.3g}",
    )


def _check_dominance(ctx: CompareContext) -> Outcome:
    if ctx.majorant is None:
        return VerdictStatus.skipped, None, "majorant not simulated"
    m = ctx.majorant
    return (
        _pass_if(m.dominance),
        -m.max_shortfall,
        f"{m.dominance_violations} violations in {m.epochs_checked} epochs",
    )


def _check_regulator(ctx: CompareContext) -> Outcome:
    rate, halfwidth = ctx.stats.estimate("y_inc")
    expected = np.asarray(ctx.derived.boundary_rates)
    gap = np.abs(rate - expected)
    relative = halfwidth / np.abs(expected)
    ok = bool((gap <= SLACK * halfwidth).all() and (relative < 0.01).all())
    return (
        _pass_if(ok),
        float((SLACK * halfwidth - gap).min()),
        f"Y/T={rate.round(6).tolist()} vs {expected.round(6).tolist()}, "
        f"relative halfwidth {relative.round(4).tolist()}",
    )


def _difference(stats: PathStats, a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return batch_means(a - b, stats.batch_time)


def _check_palm(ctx: CompareContext) -> Outcome:
    s, d = ctx.stats, ctx.derived
    mu = np.asarray(d.mu)
    atom_diff, atom_hw = _difference(
        s, s.palm_atom, s.empty_time[:, None] * mu[None, :]
    )
    ok = bool((np.abs(atom_diff) <= SLACK * atom_hw + 1e-12).all())
    margins = [float((SLACK * atom_hw - np.abs(atom_diff)).min())]

    delta = np.asarray(d.delta)
    expected = s.boundary_time[:, ::-1, :] * delta[None, :, None]
    tail_diff, tail_hw = _difference(s, s.palm_tail, expected)
    palm_rate = s.estimate("palm_tail")[0]
    resolved = palm_rate > PALM_FLOOR
    if resolved.any():
        within = np.abs(tail_diff[resolved]) <= SLACK * tail_hw[resolved] + 1e-12
        ok = ok and bool(within.all())
        margins.append(float((SLACK * tail_hw[resolved] - np.abs(tail_diff[resolved])).min()))
    return (
        _pass_if(ok),
        min(margins),
        f"atom differences {atom_diff.round(8).tolist()}, "
        f"{int(resolved.sum())} resolved tail points",
    )


def _check_balance(ctx: CompareContext) -> Outcome:
    s = ctx.stats
    if s.arrival_kind != "poisson":
        return VerdictStatus.skipped, None, "balance equation needs Poisson arrivals"
    if s.thetas.shape[0] == 0:
        return VerdictStatus.skipped, None, "no MGF arguments simulated"
    margins = []
    for theta in s.thetas:
        residual, se = balance_residual_with_error(s, ctx.derived, theta, ctx.config.network.jumps)
        margins.append(SLACK * se - residual)
    margin = min(margins)
    return _pass_if(margin >= 0), margin, f"{len(margins)} MGF arguments"


def _sandwich_check(direction: Direction) -> Callable[[CompareContext], Outcome]:
    def check(ctx: CompareContext) -> Outcome:
        if ctx.stats.arrival_kind != "poisson":
            return VerdictStatus.skipped, None, "geometric-sum bounds require Poisson arrivals"
        report = ctx.bounds.get((direction, BoundKind.geom_sum_exact))
        if report is None:
            return VerdictStatus.skipped, None, "exact-mode bounds not requested"
        estimate, halfwidth = ctx.stats.estimate("tail_time")
        k = ctx.stats.direction_index(direction)
        sim, hw = estimate[k], halfwidth[k]
        admissible = sim > SANDWICH_FLOOR
        if not admissible.any():
            return VerdictStatus.insufficient, None, "insufficient tail resolution"
        z = _t_quantile(ctx.stats.batch_time.size)
        lower_se = report.lower_se if report.lower_se is not None else np.zeros_like(sim)
        upper_se = report.upper_se if report.upper_se is not None else np.zeros_like(sim)
        slack_low = SLACK * np.sqrt(hw**2 + (z * lower_se) ** 2)
        slack_high = SLACK * np.sqrt(hw**2 + (z * upper_se) ** 2)
        above_lower = sim - (report.lower - slack_low)
        below_upper = (report.upper + slack_high) - sim
        margin = float(np.minimum(above_lower, below_upper)[admissible].min())
        return (
            _pass_if(margin >= 0),
            margin,
            f"{report.case} direction {direction}, {int(admissible.sum())} admissible points",
        )

    return check


def _check_mg1(ctx: CompareContext) -> Outcome:
    if ctx.majorant is None:
        return VerdictStatus.skipped, None, "majorant not simulated"
    if ctx.stats.arrival_kind != "poisson":
        return VerdictStatus.skipped, None, "geometric-sum form needs Poisson arrivals"
    estimate, halfwidth = ctx.majorant.estimate()
    sim, hw = estimate[0], halfwidth[0]
    admissible = (sim > 0) & (sim > 10.0 * hw)
    if not admissible.any():
        return VerdictStatus.insufficient, None, "insufficient tail resolution"
    analysis = ctx.config.analysis
    spec = GeometricSumSpec(
        r=ctx.derived.r[0],
        summand=IntegratedTailDist(base=_component(ctx.config.network.jumps, 1)),
    )
    draws = geometric_sum_samples(spec, np.random.default_rng(analysis.seed), analysis.draws)
    grid = np.asarray(ctx.majorant.grid)
    ordered = np.sort(draws)
    mc = (draws.size - np.searchsorted(ordered, grid, side="right")) / draws.size
    mc_se = np.sqrt(mc * (1.0 - mc) / draws.size)
    sim_se = hw / _t_quantile(ctx.majorant.batch_time.size)
    combined = np.sqrt(sim_se**2 + mc_se**2)
    margin = float((SLACK * combined - np.abs(sim - mc))[admissible].min())
    return _pass_if(margin >= 0), margin, f"{int(admissible.sum())} admissible points"


def _check_trend(ctx: CompareContext) -> Outcome:
    jumps = ctx.config.network.jumps
    if not isinstance(jumps, MixtureJumps):
        return VerdictStatus.skipped, None, "exact asymptote needs mixture jumps"
    asymptote = exact_asymptote(
        ctx.derived, jumps, (1.0, 0.0), mean_gap=ctx.config.network.mean_gap
    )
    report = weak_equivalence_report(ctx.stats, asymptote.evaluate, (1.0, 0.0))
    if not report.admissible:
        return VerdictStatus.insufficient, None, report.message or ""
    trend = ratio_trend(report)
    last_x = report.ratios[-1][0]
    window = [q for x, q in report.ratios if math.log10(x) >= math.log10(last_x) - 1.0]
    low, high = TREND_BAND
    in_band = all(low <= q <= high for q in window)
    margin = min(min(q - low, high - q) for q in window)
    return (
        _pass_if(in_band and trend.toward_one),
        margin,
        f"ratios {min(window):.3f}..{max(window):.3f}, slope {trend.slope:.3g}",
    )


def _check_series(ctx: CompareContext) -> Outcome:
    jumps = ctx.config.network.jumps
    if not isinstance(jumps, MixtureJumps):
        return VerdictStatus.skipped, None, "series form needs mixture jumps"
    asymptote = exact_asymptote(
        ctx.derived, jumps, (1.0, 0.0), mean_gap=ctx.config.network.mean_gap
    )
    dist = jumps.dist1
    x = 50.0 * (dist.scale if isinstance(dist, Pareto) else dist.mean)
    integral = float(asymptote.evaluate(x))
    series = asymptote.series(x)
    relative = abs(series.value - integral) / integral
    return (
        _pass_if(relative <= SERIES_TOLERANCE),
        SERIES_TOLERANCE - relative,
        f"x={x:g}: series {series.value:.6g} ({series.terms} terms) vs integral {integral:.6g}",
    )


def _check_oracle(ctx: CompareContext) -> Outcome:
    report = equivalence_suite(ctx.derived, seed=ctx.config.analysis.seed)
    return (
        _pass_if(report.passed),
        report.agreement_fraction - 0.999,
        f"{report.agreements}/{report.total} agree, "
        f"{report.boundary_disagreements} in band, {report.other_disagreements} outside",
    )


def criteria(config: ExperimentConfig, derived: DerivedQuantities) -> list[CriterionDescription]:
    """Criteria that apply to this configuration."""
    descriptions = [
        CriterionDescription(
            key="reflection",
            name="Reflection identity",
            kind=CriterionKind.invariant,
            check_fn=_check_reflection,
        ),
        CriterionDescription(
            key="dominance",
            name="Majorant dominance",
            kind=CriterionKind.invariant,
            check_fn=_check_dominance,
        ),
        CriterionDescription(key="regulator", name="Regulator rates", check_fn=_check_regulator),
        CriterionDescription(key="palm", name="Palm identities", check_fn=_check_palm),
        CriterionDescription(key="balance", name="Balance residual", check_fn=_check_balance),
    ]
    strong = check_stability(derived) is Stability.strongly_stable
    if (1.0, 0.0) in config.simulate.directions:
        descriptions.append(
            CriterionDescription(
                key="sandwich_marginal",
                name="Marginal sandwich",
                check_fn=_sandwich_check((1.0, 0.0)),
            )
        )
    if strong:
        for direction in config.analysis.comparison_directions:
            descriptions.append(
                CriterionDescription(
                    key=f"sandwich_c{direction[0]:g}",
                    name=f"Directional sandwich c={direction}",
                    check_fn=_sandwich_check(direction),
                )
            )
        descriptions.extend(
            [
                CriterionDescription(key="mg1", name="M/G/1 majorant tail", check_fn=_check_mg1),
                CriterionDescription(key="trend", name="Weak equivalence trend", check_fn=_check_trend),
                CriterionDescription(key="series", name="Series vs integral", check_fn=_check_series),
                CriterionDescription(
                    key="oracle",
                    name="Fluid oracle equivalence",
                    kind=CriterionKind.invariant,
                    check_fn=_check_oracle,
                ),
            ]
        )
    return descriptions


def compute_bounds(
    config: ExperimentConfig, derived: DerivedQuantities, grid: np.ndarray
) -> dict[tuple[Direction, BoundKind], BoundReport]:
    """Marginal and directional bounds for every requested mode."""
    analysis = config.analysis
    jumps = config.network.jumps
    bounds: dict[tuple[Direction, BoundKind], BoundReport] = {}
    if not isinstance(config.network.arrival, PoissonArrivals):
        _LOGGER.info("Geometric-sum bounds skipped: they require Poisson arrivals")
        return bounds
    for mode in analysis.modes:
        if derived.net_drain[0] > 0 and check_stability(derived) is not Stability.unstable:
            bounds[((1.0, 0.0), mode)] = theorem41_bounds(
                derived, jumps.dist1, grid, mode, node=1, seed=analysis.seed, draws=analysis.draws
            )
        if check_stability(derived) is not Stability.strongly_stable:
            continue
        for direction in analysis.comparison_directions:
            dc = classify_direction(derived, direction)
            bounds[(direction, mode)] = theorem42_bounds(
                derived,
                dc,
                jumps,
                grid,
                mode,
                eta_reading=analysis.eta_reading,
                seed=analysis.seed,
                draws=analysis.draws,
            )
    return bounds


def exit_code(verdicts: list[Verdict]) -> int:
    if any(v.kind is CriterionKind.invariant and v.status.blocking for v in verdicts):
        return EXIT_INVARIANT
    if any(v.status.blocking for v in verdicts):
        return EXIT_STATISTICAL
    return EXIT_PASS


def compare(config: ExperimentConfig, out: Path | None = None) -> tuple[list[Verdict], int]:
    """Evaluate every applicable criterion against a finished simulate run."""
    out = Path(config.output.dir if out is None else out)
    try:
        manifest = load_manifest(out)
    except FileNotFoundError as err:
        raise ConfigError(f"No simulate run found under {out}") from err
    if manifest.config_hash != config.config_hash:
        raise GridMismatchError(
            f"Run under {out} was produced by config {manifest.config_hash[:12]}, "
            f"not {config.config_hash[:12]}"
        )
    stats, majorant = load_merged(out)
    grid = config.simulate.grid.values()
    if not np.array_equal(grid, stats.grid):
        raise GridMismatchError("Simulated grid differs from the configured grid")

    derived = derive(config.network)
    bounds = compute_bounds(config, derived, stats.grid)
    for (direction, mode), report in bounds.items():
        write_csv(
            out / "bounds" / f"bounds_c{direction[0]:g}_{mode}.csv",
            BOUNDS_HEADER,
            report.rows(),
        )

    ctx = CompareContext(
        config=config, derived=derived, stats=stats, majorant=majorant, bounds=bounds
    )
    verdicts = [description.evaluate(ctx) for description in criteria(config, derived)]
    for verdict in verdicts:
        log = _LOGGER.info if not verdict.status.blocking else _LOGGER.warning
        log("%s: %s (%s)", verdict.name, verdict.status, verdict.detail)
    write_verdicts(out / "verdicts.csv", verdicts)
    return verdicts, exit_code(verdicts)


def write_verdicts(path: Path, verdicts: list[Verdict]) -> Path:
    return write_csv(
        path,
        VERDICTS_HEADER,
        (
            (v.key, v.name, v.kind, v.status, "" if v.margin is None else float(v.margin), v.detail)
            for v in verdicts
        ),
    )


def _mean_check(dist: HeavyDist) -> Verdict:
    split = float(dist.quantile(0.5))
    head, _ = integrate.quad(dist.tail, 0.0, split, epsabs=QUAD_EPSABS, epsrel=1e-10, limit=200)
    rest, _ = integrate.quad(dist.tail, split, math.inf, epsabs=QUAD_EPSABS, epsrel=1e-10, limit=200)
    relative = abs(head + rest - dist.mean) / dist.mean
    return Verdict(
        key=f"mean_{dist.family}",
        name=f"Mean vs tail integral ({dist.family})",
        kind=CriterionKind.invariant,
        status=_pass_if(relative <= MEAN_TOLERANCE),
        margin=MEAN_TOLERANCE - relative,
        detail=f"relative error {relative:.3g}",
    )


def _wald_check(dist: HeavyDist, r: float, rng: np.random.Generator, draws: int) -> Verdict:
    key, name = f"wald_{dist.family}", f"Wald identity ({dist.family})"
    if not math.isfinite(dist.second_moment):
        return Verdict(
            key=key,
            name=name,
            kind=CriterionKind.statistical,
            status=VerdictStatus.skipped,
            detail="integrated tail has an infinite mean",
        )
    summand = IntegratedTailDist(base=dist)
    samples = geometric_sum_samples(GeometricSumSpec(r=r, summand=summand), rng, draws)
    expected = r / (1.0 - r) * summand.mean
    se = float(samples.std(ddof=1) / math.sqrt(draws))
    gap = abs(float(samples.mean()) - expected)
    return Verdict(
        key=key,
        name=name,
        kind=CriterionKind.statistical,
        status=_pass_if(gap <= SLACK * se),
        margin=SLACK * se - gap,
        detail=f"mean {samples.mean():.6g} vs {expected:.6g}",
    )


def _subexp_check(dist: HeavyDist) -> Verdict:
    key, name = f"subexp_{dist.family}", f"Subexponentiality ({dist.family})"
    if isinstance(dist, Pareto):
        x = float(dist.quantile(1.0 - 1e-6))
        ratio = subexponentiality_diagnostic(dist, [x])[0][1]
        low, high = SUBEXP_BAND
        return Verdict(
            key=key,
            name=name,
            kind=CriterionKind.statistical,
            status=_pass_if(low <= ratio <= high),
            margin=min(ratio - low, high - ratio),
            detail=f"ratio {ratio:.4f} at x={x:.4g}",
        )
    if isinstance(dist, Exponential):
        x = 20.0 / dist.rate
        ratio = subexponentiality_diagnostic(dist, [x])[0][1]
        return Verdict(
            key=key,
            name=name,
            kind=CriterionKind.statistical,
            status=_pass_if(ratio > LIGHT_RATIO_FLOOR),
            margin=ratio - LIGHT_RATIO_FLOOR,
            detail=f"ratio {ratio:.4f} at x={x:.4g} flags a light tail",
        )
    return Verdict(
        key=key,
        name=name,
        kind=CriterionKind.statistical,
        status=VerdictStatus.skipped,
        detail=f"{dist.tail_class} family, no fixed reference ratio",
    )


def selfcheck(params: NetworkParams, *, seed: int = 0, draws: int = 200_000) -> list[Verdict]:
    """Distribution-kernel diagnostics for every law in the network."""
    rng = np.random.default_rng(seed)
    d = derive(params)
    laws: list[HeavyDist] = [params.jumps.dist1, params.jumps.dist2]
    if isinstance(params.arrival, RenewalArrivals):
        laws.append(params.arrival.interarrival)
    seen: list[HeavyDist] = []
    for law in laws:
        if law not in seen and law.mean > 0:
            seen.append(law)
    r = d.r[0] if 0 < d.r[0] < 1 else 0.5
    verdicts: list[Verdict] = []
    for law in seen:
        verdicts.append(_mean_check(law))
        verdicts.append(_wald_check(law, r, rng, draws))
        verdicts.append(_subexp_check(law))
    return verdicts


def describe_directions(derived: DerivedQuantities, directions: list[Direction]) -> list[dict]:
    """Per-direction case and coefficients; C0-only fields carry no r'_c."""
    rows = []
    for direction in directions:
        dc = classify_direction(derived, direction)
        rows.append(
            {
                "direction_c1": direction[0],
                "case": dc.case.value,
                "r_c": dc.r_c,
                "r_c_prime": dc.r_c_prime if dc.case is not DirectionCase.c0 else None,
                "eta1": dc.eta[0],
                "eta2": dc.eta[1],
                "m_c": dc.m_c,
            }
        )
    return rows
