"""Exception hierarchy shared by all modules."""


class CylcopError(Exception):
    """Base class for all package errors."""


class DomainError(CylcopError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class FitError(CylcopError):
    """A model could not be fitted to the given sample."""


class BandwidthSelectionError(FitError):
    """Automatic bandwidth selection failed (usually ties or a degenerate sample)."""


class CapabilityError(CylcopError):
    """The model lacks a capability required by the caller (e.g. a quantile)."""


class IntegrationError(CylcopError):
    """Numerical integration met non-finite integrand values."""


class StudyAbortedError(CylcopError):
    """Too many replicate failures in a Monte Carlo study."""


class TiedDataError(BandwidthSelectionError):
    """Exact ties in data that feed a bandwidth selector."""


class DataError(CylcopError, ValueError):
    """Input records that cannot be parsed or used."""
