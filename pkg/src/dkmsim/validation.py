"""Validation report type shared by the assumption checkers."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class Violation:
    """One concrete violation found by a checker.

    ``where`` locates it (indices, round, key); ``value`` is the offending
    quantity when there is one.
    """

    where: str
    message: str
    value: float | None = None

    def __str__(self) -> str:
        if self.value is None:
            return f"{self.where}: {self.message}"
        return f"{self.where}: {self.message} (value {self.value:.6g})"


@dataclass
class ValidationReport:
    """Outcome of one named assumption check."""

    check: str
    passed: bool
    violations: list[Violation] = field(default_factory=list)
    detail: str = ""

    def summary(self) -> str:
        status = "pass" if self.passed else "FAIL"
        line = f"{self.check}: {status}"
        if self.detail:
            line += f" ({self.detail})"
        if not self.passed and self.violations:
            shown = "; ".join(str(v) for v in self.violations[:3])
            extra = len(self.violations) - 3
            line += f" -- {shown}"
            if extra > 0:
                line += f"; +{extra} more"
        return line


def failed(check: str, violations: list[Violation], detail: str = "") -> ValidationReport:
    return ValidationReport(check, False, violations, detail)


def passed(check: str, detail: str = "") -> ValidationReport:
    return ValidationReport(check, True, [], detail)
