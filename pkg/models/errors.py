"""
Exception hierarchy shared by every package.
"""


class ZKError(Exception):
    """Base class for all errors raised by the solver and its tooling."""


class ConfigError(ZKError):
    """A configuration could not be parsed or violates a named rule."""

    def __init__(
        self, message: str, line: int | None = None, rule: str | None = None
    ) -> None:
        self.line: int | None = line
        self.rule: str | None = rule
        prefix: str = ""
        if line is not None:
            prefix += f"line {line}: "
        if rule is not None:
            prefix += f"[{rule}] "
        super().__init__(prefix + message)


class CompatibilityError(ConfigError):
    """Initial data failed an enforced compatibility check."""


class GridError(ZKError, ValueError):
    """Invalid grid, field shape, sample value or grid mismatch."""


class NumericalFaultError(ZKError):
    """The discretization produced something it never should: NaN, singular or inaccurate solves."""

    def __init__(self, message: str, snapshot: str | None = None) -> None:
        self.snapshot: str | None = snapshot
        if snapshot is not None:
            message = f"{message} (state dumped to {snapshot})"
        super().__init__(message)


class SnapshotFormatError(ZKError, ValueError):
    """A snapshot file has the wrong magic, size or contains NaN."""
