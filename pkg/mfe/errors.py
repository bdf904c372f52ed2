from __future__ import annotations

from typing import Sequence


class MfeError(Exception):
    """Base class for every error raised by the package."""


class DomainError(MfeError, ValueError):
    pass


class ConfigurationError(MfeError, ValueError):
    pass


class CapabilityError(MfeError):
    pass


class SolverError(MfeError):
    pass


class RankDeficiencyError(SolverError):
    def __init__(self, message: str, null_direction: dict[str, float] | None = None) -> None:
        super().__init__(message)
        self.null_direction = dict(null_direction or {})


class NonConvergenceError(MfeError):
    """Raised only by the command layer; solvers report `converged=False`."""


class ParseError(MfeError, ValueError):
    def __init__(self, message: str, *, path: str | None = None, line: int | None = None) -> None:
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{where}{message}")
        self.path = path
        self.line = line


def format_null_direction(names: Sequence[str], vector: Sequence[float], top: int = 3) -> dict[str, float]:
    ranked = sorted(zip(names, vector), key=lambda kv: -abs(kv[1]))
    return {k: float(v) for k, v in ranked[:top]}
