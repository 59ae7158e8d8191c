"""Exception hierarchy.

Every error carries a class name that the CLI prints verbatim as the
machine-readable error tag, so keep the names stable.
"""


class MCDistError(Exception):
    """Base class for all package errors."""


class DomainError(MCDistError, ValueError):
    """An argument lies outside the domain of a formula."""


class ConfigError(MCDistError, ValueError):
    pass


# feature extraction
class NoDetection(MCDistError):
    """No sample of the smoothed signal exceeds the detection threshold."""


class NoPeak(MCDistError):
    """The first difference never changes sign from positive to negative."""


class DegenerateEdge(MCDistError):
    """The rising edge is too short to place distinct 10% / 90% points."""


# least squares
class SingularNormalMatrix(MCDistError):
    pass


class NonFiniteResidual(MCDistError):
    pass


# estimators
class RankDeficient(MCDistError):
    pass


class NonFiniteLoss(MCDistError):
    pass


class DegenerateRates(MCDistError):
    pass


class DimensionMismatch(MCDistError, ValueError):
    pass


# evaluation
class InsufficientData(MCDistError):
    pass


# io
class ParseError(MCDistError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class MissingLabel(MCDistError):
    pass


class NonUniformSampling(MCDistError):
    pass


class UnknownEmissionTime(MCDistError, KeyError):
    """No curve parameters were fitted for the requested emission time."""

    def __str__(self):
        return Exception.__str__(self)
