"""Exception hierarchy."""


class TimingLeakError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(TimingLeakError, ValueError):
    """An argument is outside its admissible range."""


class InfeasibleProbeError(ParameterError):
    """The probe strategy cannot be realised at the requested rate."""


class EnumerationCapError(ParameterError):
    """Exhaustive enumeration was requested over too large a space."""


class IncompleteTraceError(TimingLeakError):
    """A job needed for an observation has no recorded departure."""


class NumericalError(TimingLeakError, ArithmeticError):
    """A numerical solver failed to converge."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class TruncationError(NumericalError):
    """The truncated state space still carries too much probability mass."""


class ConfigError(TimingLeakError):
    """An experiment configuration could not be parsed."""

    def __init__(self, message, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f" (line {line}, column {column})"
        super().__init__(message + loc)
        self.line = line
        self.column = column
