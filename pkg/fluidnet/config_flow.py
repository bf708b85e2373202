"""Experiment config ingestion: TOML text to a validated ExperimentConfig."""

from __future__ import annotations

from collections.abc import Sequence
import logging
from pathlib import Path
import re
import tomllib
from typing import Any

from pydantic import ValidationError

from .exceptions import ConfigError
from .models import ExperimentConfig, GridSpec

_LOGGER = logging.getLogger(__name__)

_TABLE = re.compile(r"^\s*\[\[?\s*([^\]]+?)\s*\]\]?\s*(#.*)?$")
_ASSIGN = re.compile(r"^\s*([A-Za-z0-9_.\"' -]+?)\s*=")
_TOML_POSITION = re.compile(r"\(at line (\d+), column (\d+)\)$")


def _dotted(loc: Sequence[int | str]) -> str:
    return ".".join(str(part) for part in loc)


def _unquote(key: str) -> str:
    return ".".join(part.strip().strip("\"'") for part in key.split("."))


def _key_lines(text: str) -> dict[str, int]:
    """First line (1-based) where each dotted key or table is defined."""
    lines: dict[str, int] = {}
    table = ""
    for number, line in enumerate(text.splitlines(), start=1):
        if match := _TABLE.match(line):
            table = _unquote(match.group(1))
            lines.setdefault(table, number)
        elif match := _ASSIGN.match(line):
            key = _unquote(match.group(1))
            lines.setdefault(f"{table}.{key}" if table else key, number)
    return lines


def _line_for(key_lines: dict[str, int], loc: Sequence[int | str]) -> int | None:
    """Line of the deepest defined key along a pydantic error location.

    Parts that match no key, such as union tags, are skipped.
    """
    path: list[str] = []
    line = None
    for part in loc:
        if isinstance(part, int):
            continue
        candidate = ".".join([*path, str(part)])
        if candidate in key_lines or any(k.startswith(f"{candidate}.") for k in key_lines):
            path.append(str(part))
            line = key_lines.get(candidate, line)
    return line


def parse_config(text: str, path: str = "<config>") -> ExperimentConfig:
    """Parse and validate TOML config text.

    Syntax errors carry the TOML line and column. Schema errors carry the
    dotted key path of the first offending value and the line defining it.
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        message = str(err)
        line = None
        if match := _TOML_POSITION.search(message):
            line = int(match.group(1))
            message = f"{message[: match.start()].rstrip()} (column {match.group(2)})"
        raise ConfigError(f"Invalid TOML: {message}", path=path, line=line) from err

    return validate_config(data, text=text, path=path)


def validate_config(
    data: dict[str, Any], *, text: str = "", path: str = "<config>"
) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as err:
        first = err.errors()[0]
        loc = first["loc"]
        raise ConfigError(
            first["msg"],
            path=path,
            line=_line_for(_key_lines(text), loc),
            key=_dotted(loc),
        ) from err


def load_config(path: Path | str) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"Cannot read config: {err.strerror}", path=str(path)) from err
    config = parse_config(text, path=str(path))
    _LOGGER.debug("Loaded %s (hash %s)", path, config.config_hash[:12])
    return config


def parse_grid(value: str) -> GridSpec:
    """``start:stop:num`` for a log grid, ``lin:start:stop:num`` for a linear one."""
    parts = value.split(":")
    kind = "log"
    if parts and parts[0] in ("log", "lin", "linear"):
        kind = "linear" if parts[0] != "log" else "log"
        parts = parts[1:]
    if len(parts) != 3:
        raise ConfigError(f"Grid must look like start:stop:num, got '{value}'", key="--grid")
    try:
        return GridSpec(kind=kind, start=float(parts[0]), stop=float(parts[1]), num=int(parts[2]))
    except (ValueError, ValidationError) as err:
        raise ConfigError(f"Invalid grid '{value}': {err}", key="--grid") from err


def parse_seeds(value: str) -> list[int]:
    """Comma-separated seeds with optional ranges, e.g. ``1-8`` or ``1,3,5-7``."""
    seeds: list[int] = []
    try:
        for part in value.split(","):
            if "-" in part.strip()[1:]:
                low, high = part.split("-", 1)
                seeds.extend(range(int(low), int(high) + 1))
            else:
                seeds.append(int(part))
    except ValueError as err:
        raise ConfigError(f"Invalid seed list '{value}'", key="--seeds") from err
    return seeds


def apply_overrides(
    config: ExperimentConfig,
    *,
    seeds: list[int] | None = None,
    workers: int | None = None,
    out: Path | None = None,
    grid: GridSpec | None = None,
) -> ExperimentConfig:
    """Command-line overrides, revalidated like the file itself."""
    data = config.model_dump(mode="json", exclude={"config_hash"})
    if seeds is not None:
        data["simulate"]["seeds"] = seeds
    if workers is not None:
        data["simulate"]["workers"] = workers
    if grid is not None:
        data["simulate"]["grid"] = grid.model_dump(mode="json")
    if out is not None:
        data["output"]["dir"] = str(out)
    return validate_config(data, path="<command line>")
