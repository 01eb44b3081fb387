"""Exception hierarchy.

Every error raised by the package derives from :class:`SubRiemError` and
carries a ``category`` used by the command line to pick an exit code.
"""

from __future__ import annotations


class SubRiemError(Exception):
    category = "error"
    exit_code = 1


class ConfigError(SubRiemError):
    category = "config"
    exit_code = 2


class ParseError(ConfigError):
    """Malformed expression text; ``offset`` is the byte offset of the fault."""

    def __init__(self, message: str, offset: int, text: str = ""):
        self.offset = offset
        self.text = text
        super().__init__(f"{message} at offset {offset}")


class UnknownIdentifierError(ParseError):
    pass


class UnknownScenarioError(ConfigError):
    pass


class NumericFailure(SubRiemError):
    category = "numeric"
    exit_code = 3


class DomainError(NumericFailure):
    """Expression evaluated outside its domain (division by zero, sqrt < 0, ...)."""


class SingularFrameError(NumericFailure):
    pass


class DegenerateMetricError(NumericFailure):
    pass


class BlowUpError(NumericFailure):
    def __init__(self, message: str, time: float | None = None):
        self.time = time
        super().__init__(message)


class KernelCollapsed(NumericFailure):
    """The characteristic kernel became trivial; the curve cannot be continued."""

    def __init__(self, message: str, time: float | None = None):
        self.time = time
        super().__init__(message)


class ZeroSection(NumericFailure):
    def __init__(self, message: str, time: float | None = None):
        self.time = time
        super().__init__(message)


class PreconditionError(SubRiemError):
    category = "precondition"
    exit_code = 4


class IrregularPoint(PreconditionError):
    pass


class NonHorizontalCurve(PreconditionError):
    pass


class MissingControls(PreconditionError):
    pass


class UnsupportedGroupChart(PreconditionError):
    pass


class NotBiInvariant(PreconditionError):
    pass


class NotSubalgebra(PreconditionError):
    pass


class NotReductive(PreconditionError):
    pass


class NotBracketGenerating(PreconditionError):
    pass
