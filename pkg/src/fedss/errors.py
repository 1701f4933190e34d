"""Exception types shared across the package."""
from __future__ import annotations


class ConfigurationError(ValueError):
    """A parameter combination that can never produce a valid run."""


class TableParseError(ValueError):
    """A malformed row or header in a device or bandwidth table."""

    def __init__(self, path: str, line: int, column: str, message: str):
        self.path = str(path)
        self.line = line
        self.column = column
        super().__init__(f"{self.path}:{line}: column '{column}': {message}")


class EmptyTableError(ValueError):
    """A device or bandwidth table with a header but no rows."""

    def __init__(self, path: str):
        self.path = str(path)
        super().__init__(f"{self.path}: table has no data rows")


class RoundFailedError(RuntimeError):
    """A dispatched round where one or more clients did not complete."""

    def __init__(self, failed_ids, cause: BaseException | None = None):
        self.failed_ids = tuple(sorted(failed_ids))
        self.cause = cause
        ids = ", ".join(str(i) for i in self.failed_ids)
        super().__init__(f"round failed: client(s) {ids} did not complete")
