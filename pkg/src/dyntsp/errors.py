"""Exception hierarchy shared across the package."""


class DynTspError(Exception):
    """Base class for all errors raised by dyntsp."""


class UsageError(DynTspError):
    """An argument violated a documented precondition."""


class CapacityError(DynTspError):
    """Problem size exceeds what the requested method supports."""


class UnsolvableError(DynTspError):
    """The coverage problem has no solution on the given abstraction."""

    def __init__(self, msg, emptied_by=None):
        super().__init__(msg)
        #: (i, j) pair whose value function emptied target j, if known
        self.emptied_by = emptied_by


class RuntimeFault(DynTspError):
    """The closed loop left the winning domain of the active controller."""

    def __init__(self, msg, stage=None, cell=None):
        super().__init__(msg)
        self.stage = stage
        self.cell = cell


class ConfigError(DynTspError):
    """A scenario configuration file is malformed or inconsistent."""


class ParseError(DynTspError):
    """A data file (graph fixture, TSPLIB, tour, CSV) could not be parsed."""

    def __init__(self, msg, line=None):
        if line is not None:
            msg = f"line {line}: {msg}"
        super().__init__(msg)
        self.line = line


class NumericError(DynTspError):
    """A numerical routine produced non-finite intermediate values."""
