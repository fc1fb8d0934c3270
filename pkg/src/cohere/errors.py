"""Exception types shared across the package."""


class CohereError(Exception):
    """Base class for all errors raised by :mod:`cohere`."""


class DimensionMismatch(CohereError, ValueError):
    pass


class InvalidState(CohereError, ValueError):
    """An operator failed the density-matrix / pure-state invariants."""


class CapExceeded(CohereError):
    """A configured size cap (dimension, block count, enumeration size) was hit."""

    def __init__(self, what, value, limit, hint=None):
        self.what = what
        self.value = value
        self.limit = limit
        msg = f"{what} = {value} exceeds cap {limit}"
        if hint:
            msg += f" ({hint})"
        super().__init__(msg)


class IllFormed(CohereError, ValueError):
    """An SDP was assembled with inconsistent dimensions or non-Hermitian LMIs."""


class NumericalFailure(CohereError, RuntimeError):
    """The conic solver broke down or returned an unusable answer."""


class InvalidWitness(CohereError, ValueError):
    pass


class NotDeterministic(CohereError, ValueError):
    """A channel's classical action on basis states is not a function."""
