"""Exception types shared across the package."""


class ImmgpError(Exception):
    """Base class for all immgp errors."""


class NotPositiveDefinite(ImmgpError):
    """Matrix failed Cholesky factorization even after the jitter schedule."""


class DimensionMismatch(ImmgpError):
    """Operands have incompatible shapes."""


class DofTooSmall(ImmgpError):
    """Wishart degrees of freedom below the matrix dimension."""


class NonPositiveParameter(ImmgpError):
    """Shape/rate parameter that must be strictly positive is not."""


class NonPositiveVariance(ImmgpError):
    """Variance parameter that must be strictly positive is not."""


class OutOfRange(ImmgpError):
    """Argument outside the supported range."""


class BadSplit(ImmgpError):
    """Train/test split sizes are inconsistent with the dataset."""


class InvalidConfig(ImmgpError):
    """Run configuration failed validation (unknown key, bad value)."""


class ParseError(ImmgpError):
    """Input file failed to parse; message carries row/column context."""


class SchemaMismatch(ImmgpError):
    """Chain file and dataset disagree on dimensions or schema version."""


class LengthMismatch(ImmgpError):
    """Paired inputs (predictions vs truth) differ in length."""


class NumericalError(ImmgpError):
    """Unrecoverable numerical failure; message carries sweep context."""
