"""Exception types shared across the package."""


class SrteError(Exception):
    """Base class for package errors."""


class PointOutsideDomain(SrteError):
    """A point that must lie in the domain interior does not."""


class InvalidExponent(SrteError):
    """Lebesgue exponent outside [1, inf]."""


class GridMismatch(SrteError):
    """Fields built on different spatial grids were combined."""


class QuadratureMismatch(SrteError):
    """Fields or kernels built on different velocity quadratures were combined."""


class TangentialRay(SrteError):
    """A characteristic ray is tangential to the boundary."""


class DegenerateStart(SrteError):
    """Power iteration start field is annihilated by the operator."""


class HypothesesNotMet(SrteError):
    """A theorem check was requested but its hypotheses do not hold."""


class ConfigError(SrteError):
    """Scenario configuration is missing, malformed, or inconsistent."""
