"""Exception hierarchy for the varsmooth package."""

from __future__ import annotations

from typing import Optional


class VarSmoothError(RuntimeError):
    """Base class for every error raised by the package."""


class InvalidInputError(VarSmoothError, ValueError):
    """Raised when an argument or sample violates a documented precondition."""


class FormatError(InvalidInputError):
    """Raised when a VSGF1/VSMS1/VSSS1/VSQS1 file cannot be parsed."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None) -> None:
        location = ""
        if path is not None:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        super().__init__(f"{location}{message}")
        self.path = path
        self.line = line


class NumericalError(VarSmoothError):
    """Raised when a computation cannot produce a finite, trustworthy result."""

    def __init__(self, message: str, module: str = "", operation: str = "") -> None:
        super().__init__(message)
        self.module = module
        self.operation = operation

    def describe(self) -> str:
        where = ".".join(part for part in (self.module, self.operation) if part)
        return f"{where}: {self}" if where else str(self)
