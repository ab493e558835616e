"""Exception hierarchy shared across the package."""

from __future__ import annotations


class KisBlockError(Exception):
    """Base class for all package errors."""


class InvalidParams(KisBlockError, ValueError):
    """A parameter vector violates its invariants."""


class InvalidShock(KisBlockError, ValueError):
    """Unknown shock target, bad persistence, or timing outside the horizon."""


class SolverError(KisBlockError):
    """Base class for failures of the path solver."""


class NonConvergence(SolverError):
    """Newton iteration hit its cap without meeting the tolerance."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class IndeterminateSystem(SolverError):
    """The smooth linearized system violates the Blanchard-Kahn counting rule."""

    def __init__(self, message: str, determinacy: str = "indeterminate"):
        super().__init__(message)
        self.determinacy = determinacy


class DeterminacyFailure(SolverError):
    """Eigenvalue computation failed on a degenerate parameterization."""


class ZeroDenominator(KisBlockError, ZeroDivisionError):
    """Sacrifice ratio requested with a zero price-level effect."""


class UnknownPreset(KisBlockError, KeyError):
    """Preset name not in the registry."""


class FitError(KisBlockError):
    """Base class for calibration fitter failures."""


class SolverFailureDuringFit(FitError):
    """Raised only when every candidate in a fit fails to solve."""


class InfeasibleTargets(FitError):
    """Best loss found is above the feasibility threshold."""

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


class ConfigError(KisBlockError, ValueError):
    """Malformed or invalid scenario configuration."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        super().__init__(message)
        self.line = line
        self.column = column

    def to_dict(self) -> dict:
        return {"error": "ConfigError", "message": str(self), "line": self.line, "column": self.column}
