"""Exception types shared across the package."""


class MklError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(MklError, ValueError):
    """An input violates a documented precondition."""


class NumericalError(MklError, RuntimeError):
    """A numerical routine failed to factorize or converge."""
