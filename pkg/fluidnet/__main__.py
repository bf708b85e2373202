"""Command line: derive, simulate, compare, oracle and selfcheck."""

from __future__ import annotations

import argparse
from collections.abc import Sequence
import logging
from pathlib import Path

from .compare import compare, describe_directions, exit_code, selfcheck, write_verdicts
from .config_flow import apply_overrides, load_config, parse_grid, parse_seeds
from .const import EXIT_CONFIG, EXIT_INVARIANT, EXIT_PASS, VERSION
from .coordinator import ExperimentCoordinator, write_csv
from .exceptions import (
    CaseMismatchError,
    ConfigError,
    GridMismatchError,
    StabilityError,
)
from .fluid_oracle import equivalence_suite
from .models import ExperimentConfig, Stability
from .network import check_stability, derive

_LOGGER = logging.getLogger(__name__)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fluidnet",
        description="Two-node fluid network simulator and tail-bound checker.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, required=True, help="TOML experiment config")
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("--seeds", default=None, help="e.g. 1-8 or 1,3,5")
    common.add_argument("--workers", type=int, default=None)
    common.add_argument("--grid", default=None, help="start:stop:num (log) or lin:start:stop:num")

    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("derive", parents=[common], help="closed-form quantities")
    commands.add_parser("simulate", parents=[common], help="simulate every seed")
    commands.add_parser("compare", parents=[common], help="check a run against the bounds")
    oracle = commands.add_parser("oracle", parents=[common], help="fluid oracle equivalence")
    oracle.add_argument("--tuples", type=int, default=10_000)
    oracle.add_argument("--steps", type=int, default=10_000)
    commands.add_parser("selfcheck", parents=[common], help="distribution diagnostics")
    return parser


def _load(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config(args.config)
    return apply_overrides(
        config,
        seeds=parse_seeds(args.seeds) if args.seeds else None,
        workers=args.workers,
        out=args.out,
        grid=parse_grid(args.grid) if args.grid else None,
    )


def cmd_derive(config: ExperimentConfig) -> int:
    d = derive(config.network)
    stability = check_stability(d)
    out = config.output.dir
    rows = [
        ("delta", *d.delta),
        ("alpha", *d.alpha),
        ("net_drain", *d.net_drain),
        ("rho", *d.rho),
        ("r", *d.r),
        ("r_prime", *d.r_prime),
        ("boundary_rate", *d.boundary_rates),
    ]
    write_csv(out / "derived.csv", ("quantity", "node1", "node2"), rows)
    print(f"Stability: {stability}")
    for name, first, second in rows:
        print(f"  {name:<14} {first:>12.6g} {second:>12.6g}")
    print(f"  {'empty_bound':<14} {d.empty_bound:>12.6g}")

    directions = list(dict.fromkeys([*config.simulate.directions, *config.analysis.comparison_directions]))
    if stability is Stability.strongly_stable:
        described = describe_directions(d, directions)
        header = ("direction_c1", "case", "r_c", "r_c_prime", "eta1", "eta2", "m_c")
        write_csv(
            out / "directions.csv",
            header,
            ([("n/a" if row[key] is None else row[key]) for key in header] for row in described),
        )
        for row in described:
            prime = "n/a" if row["r_c_prime"] is None else f"{row['r_c_prime']:.6g}"
            print(
                f"  c1={row['direction_c1']:<6g} {row['case']}  r_c={row['r_c']:.6g}  "
                f"r'_c={prime}  eta=({row['eta1']:.6g}, {row['eta2']:.6g})"
            )
    elif not stability.simulable:
        print("  Simulation commands refuse this network")
    return EXIT_PASS


def cmd_simulate(config: ExperimentConfig) -> int:
    manifest = ExperimentCoordinator(config).simulate()
    if manifest.invariant_failures:
        return EXIT_INVARIANT
    return EXIT_PASS


def cmd_compare(config: ExperimentConfig) -> int:
    verdicts, code = compare(config)
    for verdict in verdicts:
        print(f"{verdict.status:<12} {verdict.name}: {verdict.detail}")
    return code


def cmd_oracle(config: ExperimentConfig, tuples: int, steps: int) -> int:
    d = derive(config.network)
    report = equivalence_suite(d, tuples=tuples, seed=config.analysis.seed, steps=steps)
    print(
        f"{report.agreements}/{report.total} agree; "
        f"{report.boundary_disagreements} within band {report.band:.3g}; "
        f"{report.other_disagreements} outside"
    )
    return EXIT_PASS if report.passed else EXIT_INVARIANT


def cmd_selfcheck(config: ExperimentConfig) -> int:
    verdicts = selfcheck(config.network, seed=config.analysis.seed)
    write_verdicts(config.output.dir / "selfcheck.csv", verdicts)
    for verdict in verdicts:
        print(f"{verdict.status:<12} {verdict.name}: {verdict.detail}")
    return exit_code(verdicts)


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        config = _load(args)
        match args.command:
            case "derive":
                return cmd_derive(config)
            case "simulate":
                return cmd_simulate(config)
            case "compare":
                return cmd_compare(config)
            case "oracle":
                return cmd_oracle(config, args.tuples, args.steps)
            case "selfcheck":
                return cmd_selfcheck(config)
    except (ConfigError, StabilityError, GridMismatchError, CaseMismatchError) as err:
        _LOGGER.error("%s", err)
        return EXIT_CONFIG
    raise AssertionError(f"Unknown command {args.command}")


if __name__ == "__main__":
    raise SystemExit(main())
