"""Exception hierarchy shared by all conclab modules."""


class ConclabError(Exception):
    """Base class for every error raised by conclab."""


class InputError(ConclabError, ValueError):
    """Malformed or out-of-range input (wrong shape, bad parameter)."""


class DomainError(ConclabError, ValueError):
    """Input is well-formed but outside the mathematical domain of the operation."""


class CapacityError(ConclabError):
    """Exact enumeration would exceed the supported support size."""


class FitFailure(ConclabError):
    """No constant in the search range makes the bound dominate the data."""


class ReplicateError(ConclabError):
    """A Monte Carlo replicate produced a non-finite value."""

    def __init__(self, index, value):
        super().__init__(f"replicate {index} returned non-finite value {value!r}")
        self.index = index
        self.value = value
