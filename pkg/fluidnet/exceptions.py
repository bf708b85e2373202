"""Errors raised by fluidnet."""

from __future__ import annotations


class FluidNetError(Exception):
    """Base error for the toolkit."""


class StabilityError(FluidNetError):
    """Parameters do not satisfy the stability condition an operation needs."""


class NumericalInversionError(FluidNetError):
    """Bracketed inversion of a tail function did not converge."""


class CaseMismatchError(FluidNetError):
    """A direction was supplied with a case that its sign conditions contradict."""


class GridMismatchError(FluidNetError):
    """Simulated and analytic grids (or directions) do not line up."""


class ConfigError(FluidNetError):
    """Error to indicate the experiment config is invalid."""

    def __init__(
        self,
        message: str,
        *,
        path: str | None = None,
        line: int | None = None,
        key: str | None = None,
    ) -> None:
        self.path = path
        self.line = line
        self.key = key
        location = ":".join(str(part) for part in (path, line) if part is not None)
        prefix = f"{location}: " if location else ""
        suffix = f" (at '{key}')" if key else ""
        super().__init__(f"{prefix}{message}{suffix}")
