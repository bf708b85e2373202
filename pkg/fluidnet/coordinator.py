"""Seed fan-out, merge and CSV emission for simulation runs."""

from __future__ import annotations

import asyncio
from collections.abc import Iterable, Sequence
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
import csv
from functools import partial
import logging
from pathlib import Path
import time
from typing import Any

from .const import COMPLEMENTARITY_EPSILON, REFLECTION_TOLERANCE, VERSION
from .models import (
    DerivedQuantities,
    ExperimentConfig,
    MajorantStats,
    PathStats,
    RunManifest,
    Stability,
)
from .network import derive, require_simulable
from .simulator import SeedResult, simulate

_LOGGER = logging.getLogger(__name__)

TAILS_HEADER = ("direction_c1", "x", "tail_estimate", "ci_halfwidth")
SUMMARY_HEADER = ("quantity", "value", "ci_halfwidth")
MAJORANT_HEADER = ("node", "x", "tail_estimate", "ci_halfwidth")

MANIFEST_FILE = "manifest.json"
MERGED_DIR = "merged"


def _cell(value: Any) -> str:
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Write rows with round-trip float formatting, so equal runs give equal bytes."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(value) for value in row])
    return path


def summary_rows(stats: PathStats, derived: DerivedQuantities) -> list[tuple[str, float, float]]:
    """Scalar estimates with batch-means halfwidths, next to their closed forms."""
    y_rate, y_hw = stats.estimate("y_inc")
    empty, empty_hw = stats.estimate("empty_time")
    atom, atom_hw = stats.estimate("palm_atom")
    rows = [
        ("horizon", stats.horizon, 0.0),
        ("events", float(stats.events), 0.0),
        ("y_rate_1", float(y_rate[0]), float(y_hw[0])),
        ("y_rate_2", float(y_rate[1]), float(y_hw[1])),
        ("boundary_rate_1", derived.boundary_rates[0], 0.0),
        ("boundary_rate_2", derived.boundary_rates[1], 0.0),
        ("empty_fraction", float(empty), float(empty_hw)),
        ("empty_bound", derived.empty_bound, 0.0),
        ("palm_atom_1", float(atom[0]), float(atom_hw[0])),
        ("palm_atom_2", float(atom[1]), float(atom_hw[1])),
        ("d0", stats.d0(derived), 0.0),
        ("max_reflection_residual", stats.max_reflection_residual, 0.0),
        ("max_complementarity", stats.max_complementarity, 0.0),
        ("min_z", stats.min_z, 0.0),
    ]
    return rows


def majorant_rows(majorant: MajorantStats) -> list[tuple[int, float, float, float]]:
    estimate, halfwidth = majorant.estimate()
    return [
        (node + 1, float(x), float(estimate[node, g]), float(halfwidth[node, g]))
        for node in range(2)
        for g, x in enumerate(majorant.grid)
    ]


def invariant_failures(stats: PathStats, majorant: MajorantStats | None) -> list[str]:
    """Pathwise checks that must hold exactly up to rounding."""
    failures = []
    if stats.max_reflection_residual > REFLECTION_TOLERANCE:
        failures.append(f"reflection residual {stats.max_reflection_residual:.3g}")
    if stats.max_complementarity > REFLECTION_TOLERANCE:
        failures.append(f"regulator grew off the boundary by {stats.max_complementarity:.3g}")
    if stats.min_z < -COMPLEMENTARITY_EPSILON:
        failures.append(f"negative content {stats.min_z:.3g}")
    if majorant is not None and not majorant.dominance:
        failures.append(
            f"{majorant.dominance_violations} majorant violations "
            f"(max shortfall {majorant.max_shortfall:.3g})"
        )
    return failures


class ExperimentCoordinator:
    """Runs every configured seed and writes per-seed and merged output."""

    def __init__(self, config: ExperimentConfig) -> None:
        self.config = config
        self.params = config.network
        self.derived = derive(config.network)
        self.out = Path(config.output.dir)

    def _job(self, seed: int, majorant: bool) -> partial[SeedResult]:
        section = self.config.simulate
        return partial(
            simulate,
            self.params,
            horizon=section.horizon,
            warmup=section.effective_warmup,
            grid=section.grid.values().tolist(),
            directions=section.directions,
            seed=seed,
            thetas=section.thetas,
            batches=section.batches,
            majorant=majorant,
        )

    def _wants_majorant(self, stability: Stability) -> bool:
        if not self.config.simulate.majorant:
            return False
        if stability is not Stability.strongly_stable:
            _LOGGER.warning("Majorant check skipped: network is not strongly stable")
            return False
        return True

    def _executor(self) -> Executor:
        section = self.config.simulate
        workers = min(section.workers, len(section.seeds))
        if workers == 1:
            return ThreadPoolExecutor(max_workers=1)
        return ProcessPoolExecutor(max_workers=workers)

    async def async_run_seeds(self) -> list[SeedResult]:
        """One path per seed, bounded by the configured worker count."""
        seeds = self.config.simulate.seeds
        stability = require_simulable(self.derived, self.config.simulate.directions)
        majorant = self._wants_majorant(stability)
        loop = asyncio.get_running_loop()
        with self._executor() as executor:
            results = await asyncio.gather(
                *(loop.run_in_executor(executor, self._job(seed, majorant)) for seed in seeds)
            )
        for seed, result in zip(seeds, results, strict=True):
            _LOGGER.debug("Seed %s done: %d jumps", seed, result.stats.events)
        return list(results)

    def _write_seed(self, result: SeedResult) -> list[str]:
        stats = result.stats
        seed_dir = self.out / f"seed_{stats.seeds[0]}"
        files = [
            write_csv(seed_dir / "tails.csv", TAILS_HEADER, stats.tail_rows()),
            write_csv(
                seed_dir / "summary.csv", SUMMARY_HEADER, summary_rows(stats, self.derived)
            ),
        ]
        stats_path = seed_dir / "stats.json"
        stats_path.write_text(stats.model_dump_json(), encoding="utf-8")
        files.append(stats_path)
        if result.majorant is not None:
            files.append(
                write_csv(seed_dir / "majorant.csv", MAJORANT_HEADER, majorant_rows(result.majorant))
            )
        return [str(path.relative_to(self.out)) for path in files]

    def _write_merged(
        self, stats: PathStats, majorant: MajorantStats | None
    ) -> list[str]:
        merged_dir = self.out / MERGED_DIR
        files = [
            write_csv(merged_dir / "tails.csv", TAILS_HEADER, stats.tail_rows()),
            write_csv(
                merged_dir / "summary.csv", SUMMARY_HEADER, summary_rows(stats, self.derived)
            ),
        ]
        stats_path = merged_dir / "stats.json"
        stats_path.write_text(stats.model_dump_json(), encoding="utf-8")
        files.append(stats_path)
        if majorant is not None:
            majorant_path = merged_dir / "majorant.json"
            majorant_path.write_text(majorant.model_dump_json(), encoding="utf-8")
            files.append(majorant_path)
            files.append(
                write_csv(merged_dir / "majorant.csv", MAJORANT_HEADER, majorant_rows(majorant))
            )
        return [str(path.relative_to(self.out)) for path in files]

    async def async_simulate(self) -> RunManifest:
        started = time.perf_counter()
        results = await self.async_run_seeds()

        per_seed = {
            str(result.stats.seeds[0]): self._write_seed(result) for result in results
        }
        stats = PathStats.merge([result.stats for result in results])
        parts = [result.majorant for result in results if result.majorant is not None]
        majorant = MajorantStats.merge(parts) if parts else None
        merged_files = self._write_merged(stats, majorant)

        failures = invariant_failures(stats, majorant)
        for failure in failures:
            _LOGGER.error("Pathwise invariant failed: %s", failure)

        manifest = RunManifest(
            config_hash=self.config.config_hash,
            version=VERSION,
            seeds=stats.seeds,
            per_seed_files=per_seed,
            merged_files=merged_files,
            wall_clock=time.perf_counter() - started,
            summary={name: value for name, value, _ in summary_rows(stats, self.derived)},
            dominance=majorant.dominance if majorant is not None else None,
            invariant_failures=failures,
        )
        (self.out / MANIFEST_FILE).write_text(
            manifest.model_dump_json(indent=2), encoding="utf-8"
        )
        _LOGGER.info(
            "Simulated %d seeds over %.3g time units in %.1fs",
            len(stats.seeds),
            stats.horizon,
            manifest.wall_clock,
        )
        return manifest

    def simulate(self) -> RunManifest:
        return asyncio.run(self.async_simulate())


def load_manifest(out: Path) -> RunManifest:
    path = Path(out) / MANIFEST_FILE
    return RunManifest.model_validate_json(path.read_text(encoding="utf-8"))


def load_merged(out: Path) -> tuple[PathStats, MajorantStats | None]:
    """Merged statistics written by a previous simulate run."""
    merged_dir = Path(out) / MERGED_DIR
    stats = PathStats.model_validate_json((merged_dir / "stats.json").read_text(encoding="utf-8"))
    majorant_path = merged_dir / "majorant.json"
    majorant = None
    if majorant_path.exists():
        majorant = MajorantStats.model_validate_json(majorant_path.read_text(encoding="utf-8"))
    return stats, majorant
