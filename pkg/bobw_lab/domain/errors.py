from __future__ import annotations

from typing import Any

EXIT_REFUSAL = 2
EXIT_FAULT = 1


class LabError(RuntimeError):
    """Base failure of the lab; ``exit_code`` is what the CLI returns for it."""

    exit_code: int = EXIT_FAULT

    def __init__(self, message: str, *, exit_code: int | None = None, details: dict[str, Any] | None = None) -> None:
        super().__init__(message)
        if exit_code is not None:
            self.exit_code = exit_code
        self.details: dict[str, Any] = dict(details or {})


class ConfigurationError(LabError):
    """Experiment configuration that cannot be run as written."""

    exit_code = EXIT_REFUSAL


class ClassificationRefusal(LabError):
    """Algorithm incompatible with the observability class of the game."""

    exit_code = EXIT_REFUSAL


class GameFormatError(LabError):
    exit_code = EXIT_REFUSAL

    def __init__(
            self,
            message: str,
            *,
            line: int | None = None,
            column: int | None = None,
            cell: tuple[int, int] | None = None,
    ) -> None:
        details: dict[str, Any] = {}
        if line is not None:
            details["line"] = line
        if column is not None:
            details["column"] = column
        if cell is not None:
            details["cell"] = list(cell)
        super().__init__(message, details=details)
        self.line = line
        self.column = column
        self.cell = cell


class GameAnalysisError(LabError):
    """Game outside the analyzable class (degenerate, duplicate actions, disconnected neighbors)."""

    exit_code = EXIT_REFUSAL


class RegularizerDomainError(LabError, ValueError):
    pass


class RootFindingError(LabError):
    """A monotone root search hit its iteration cap or lost its bracket."""


class UnboundedStabilityError(LabError):
    pass


class DecompositionError(LabError):
    pass


class SolverError(LabError):
    pass
