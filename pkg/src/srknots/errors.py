"""Exception taxonomy shared by all modules.

Every failure mode that callers are expected to handle gets its own class;
anything else is a plain bug and surfaces as a standard Python exception.
"""


class SrknotsError(Exception):
    """Base class for all computation failures raised by this package."""


class DegenerateProcess(SrknotsError):
    """The observed process is constant (or nearly so) and has no well-defined maximizer."""


class NearSingular(SrknotsError):
    """A regression denominator 1 - rho is below the safe threshold; use the robust ratio."""


class Unconverged(SrknotsError):
    """An iterative routine hit its iteration cap without meeting its tolerance."""


class NotAMaximum(SrknotsError):
    """The Hessian at the claimed maximizer is not negative definite."""


class RankDeficient(SrknotsError):
    """A model covariance matrix does not have the rank the theory requires."""


class NonPositiveDenominator(SrknotsError):
    """A survival-ratio denominator is non-positive; the certificate is invalid."""


class OutOfRange(SrknotsError):
    """A statistic left [0, 1] by more than the numerical slack; never clamped."""


class SchemaError(SrknotsError):
    """An input file does not conform to the documented JSON schema."""
