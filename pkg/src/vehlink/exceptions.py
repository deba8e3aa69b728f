"""Exception hierarchy shared by all vehlink modules."""


class VehlinkError(Exception):
    """Base class for all errors raised by vehlink."""


class ConfigError(VehlinkError, ValueError):
    """Invalid configuration, scenario or grid description."""


class DelayWindowError(VehlinkError, ValueError):
    """A path delay falls outside the sampled delay window."""


class NyquistError(VehlinkError, ValueError):
    """Doppler content violates the time-sampling condition."""


class UndefinedSpreadError(VehlinkError, ValueError):
    """A moment estimate was requested for an all-zero profile."""


class ConsistencyError(VehlinkError, ArithmeticError):
    """An internal numerical invariant was violated."""


class GeometryError(VehlinkError, ValueError):
    """Degenerate scenario geometry (e.g. coincident nodes)."""


class RangeError(VehlinkError, ValueError):
    """A requested target lies outside the reachable range."""


class OracleError(VehlinkError, RuntimeError):
    """A FER oracle failed while evaluating a grid point."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point
