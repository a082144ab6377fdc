"""Exception hierarchy shared across the package."""


class AI4ARError(Exception):
    """Base class for all errors raised by this package."""


class InvariantError(AI4ARError, ValueError):
    """A value type was constructed with fields that violate its invariants."""
