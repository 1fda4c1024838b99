"""Parser and linter diagnostics shared by the chain-program and test-script languages."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class Severity(Enum):
    ERROR = "Error"
    WARNING = "Warning"


@dataclass(frozen=True)
class Diagnostic:
    """One message anchored to a 1-based source line."""

    severity: Severity
    line: int
    message: str

    def __str__(self) -> str:
        return f"{self.severity.value} (line {self.line}): {self.message}"


def error(line: int, message: str) -> Diagnostic:
    return Diagnostic(Severity.ERROR, line, message)


def warning(line: int, message: str) -> Diagnostic:
    return Diagnostic(Severity.WARNING, line, message)


class SourceError(Exception):
    """Raised by parsers when a source file contains one or more Error diagnostics."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))
