"""
exception hierarchy for the analyzer
"""
from typing import Any, Optional


class TypeflawError(Exception):
    """base class for every error raised by the analyzer"""


class SubstitutionConflict(TypeflawError):
    """two substitutions cannot be merged into an idempotent one"""


class ImpureProblem(TypeflawError):
    """a unification problem mixes theories where a pure one is required"""


class UnsupportedTheory(TypeflawError):
    def __init__(self, theory: str):
        super().__init__(f"unsupported theory: {theory}")
        self.theory = theory


class ConfigError(TypeflawError):
    pass


class IllTypedHonestSubstitution(TypeflawError):
    pass


class UnknownVariable(TypeflawError):
    pass


class RuleNotApplicable(TypeflawError):
    pass


class SearchBudgetExceeded(TypeflawError):
    """search limits hit; partial holds whatever was collected so far"""

    def __init__(self, message: str, partial: Any = None):
        super().__init__(message)
        self.partial = partial


class InvariantViolation(TypeflawError):
    def __init__(self, invariant: str, detail: str = ""):
        super().__init__(f"invariant violated: {invariant}" + (f" ({detail})" if detail else ""))
        self.invariant = invariant
        self.detail = detail


class ProtocolError(TypeflawError):
    """problems in protocol / scenario / trace input"""


class ProtocolSyntaxError(ProtocolError):
    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        where = f" at line {line}, column {column}" if line is not None else ""
        super().__init__(f"{message}{where}")
        self.line = line
        self.column = column


class UndeclaredIdentifier(ProtocolError):
    def __init__(self, name: str):
        super().__init__(f"undeclared identifier: {name}")
        self.name = name


class TypeAnnotationMissing(ProtocolError):
    def __init__(self, name: str):
        super().__init__(f"missing type annotation for {name}")
        self.name = name


class UnknownRole(ProtocolError):
    def __init__(self, name: str):
        super().__init__(f"unknown role: {name}")
        self.name = name


class DirectionMismatch(ProtocolError):
    pass


class TraceFormatError(ProtocolError):
    pass
