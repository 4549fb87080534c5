"""Exception types raised across the package."""


class LiouvTrajError(Exception):
    """Base class for all package errors."""


class InsufficientPoints(LiouvTrajError):
    pass


class SingularFit(LiouvTrajError):
    pass


class OrderTooHigh(LiouvTrajError):
    pass


class StencilCollapse(LiouvTrajError):
    pass


class NoMirror(LiouvTrajError):
    pass


class MissingDiagonal(LiouvTrajError):
    pass


class StabilityViolation(LiouvTrajError):
    pass


class ConfigError(LiouvTrajError):
    pass


class ParseError(ConfigError):
    def __init__(self, msg, line=None, column=None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(msg + where)


class UnknownKey(ConfigError):
    pass


class RangeError(ConfigError):
    pass


class NonGaussianWarning(UserWarning):
    """Width fit residual is large; the field is not close to a Gaussian."""
