"""Exception types shared across the package."""


class EchobitsError(Exception):
    """Base class for all package errors."""


class ConfigurationError(EchobitsError):
    """Invalid context, run configuration, or analysis window."""


class ArithmeticDomainError(EchobitsError):
    """Operand outside an operation's domain (division by zero, sqrt of a
    negative, zero-norm state, negative dynamic range)."""


class PhaseError(EchobitsError):
    """Operation requires a different PT phase (e.g. broken-phase only)."""


class ExceptionalPointError(EchobitsError):
    """Parameters at or too close to the eigenvector-coalescence point."""


class ConditioningError(EchobitsError):
    """Eigenvector matrix too ill-conditioned for the working precision."""


class UndefinedRatioError(EchobitsError):
    """Work-echo ratio undefined because the outgoing work vanishes."""


class FitError(EchobitsError):
    """Degenerate input to the scaling fit."""


class ComparisonError(EchobitsError):
    """Overflow estimates are not comparable (mismatched configuration)."""
