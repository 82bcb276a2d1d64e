"""Exception types raised by the solver and certification pipeline."""
from __future__ import annotations


class RateViscError(Exception):
    """Base class for all package errors."""


class NumericOverflow(RateViscError, FloatingPointError):
    pass


class ProjectionNotConverged(RateViscError):
    def __init__(self, residual: float):
        super().__init__(f"projection not converged (residual {residual:.3e})")
        self.residual = residual


class TimeOutsideHorizon(RateViscError, ValueError):
    pass


class DomainMismatch(RateViscError, ValueError):
    pass


class InnerSolverStalled(RateViscError):
    def __init__(self, message: str, best=None, residual: float = float("nan"), step: int | None = None):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.step = step


class LineSearchFailure(RateViscError):
    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class ReparameterizationFailed(RateViscError):
    pass


class SweepNotConverged(RateViscError):
    def __init__(self, result):
        super().__init__("sweep not converged")
        self.result = result


class CharacterizationViolated(RateViscError):
    pass


class ConfigError(RateViscError, ValueError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.line = line
        self.field = field
