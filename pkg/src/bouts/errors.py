"""Exception hierarchy shared across the package."""


class BoutsError(Exception):
    """Base class for all errors raised by this package."""


class DataError(BoutsError):
    """Malformed or inconsistent input data (CSV parsing, invariant violations)."""


class NumericalError(BoutsError):
    """Numerically undefined request (zero variance, NaN routing, shape mismatch)."""
