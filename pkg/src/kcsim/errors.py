"""Exception types shared across the toolkit."""


class KcsError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(KcsError):
    """Invalid configuration: parse failure or violated physical constraint."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}" + (f", col {column}" if column else "") + f": {message}"
        super().__init__(message)


class StepSizeError(KcsError):
    """A CFL or stability restriction on the time step was violated."""


class BlowUpError(KcsError):
    """Non-finite state detected during time stepping."""

    def __init__(self, t, what="state"):
        self.t = t
        super().__init__(f"non-finite {what} at t={t:.6g}")


class ExtrapolationError(KcsError):
    """A field or density probe fell outside the sampled extent."""


class GeometryError(KcsError):
    """Two grids with incompatible geometry were combined."""


class SnapshotFormatError(KcsError):
    """Corrupt or mismatched binary snapshot."""


class InvalidStateError(KcsError):
    """Solver state violates a structural invariant (e.g. negative density)."""
