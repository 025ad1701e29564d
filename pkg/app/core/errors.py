"""Exception hierarchy shared by the core modules, the CLI and the HTTP layer."""

from typing import Any, Dict, Optional


class PlatoonDragError(Exception):
    """Base error. `category` is the machine-readable name, `exit_code` the CLI status."""

    category = "error"
    exit_code = 1

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    def to_dict(self) -> Dict[str, Any]:
        return {"category": self.category, "message": self.message}


class DomainError(PlatoonDragError, ValueError):
    """Input outside the domain of a formula (non-positive gap, zero speed, ...)."""

    category = "domain"
    exit_code = 3


class NoBreakpoint(PlatoonDragError):
    """The power branch never reaches unity inside the search bracket."""

    category = "no_breakpoint"
    exit_code = 3


class NoPositiveRoot(DomainError):
    """Fuel below the idle rate: the quadratic fuel map has no non-negative power."""

    category = "no_positive_root"


class InvalidProblem(PlatoonDragError):
    category = "invalid_problem"
    exit_code = 3


class NonConvergence(PlatoonDragError):
    category = "non_convergence"
    exit_code = 4

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        data["diagnostics"] = self.diagnostics
        return data


class PointError(PlatoonDragError):
    """A pointwise failure inside a series conversion; `index` is zero-based."""

    category = "pointwise"
    exit_code = 3

    def __init__(self, index: int, cause: Exception):
        super().__init__(f"point {index}: {cause}")
        self.index = index
        self.cause = cause

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        data["index"] = self.index
        data["cause"] = getattr(self.cause, "category", type(self.cause).__name__)
        return data


class DataParseError(PlatoonDragError):
    category = "parse"
    exit_code = 2

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        data["line"] = self.line
        return data


class ReproductionMismatch(PlatoonDragError):
    category = "reproduction_mismatch"
    exit_code = 5
