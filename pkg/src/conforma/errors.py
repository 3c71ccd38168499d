"""Exception types shared across the package."""


class ConformaError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(ConformaError, ValueError):
    pass


class NotPositiveDefinite(ConformaError, ValueError):
    """A matrix expected to be symmetric positive definite is not.

    Usually signals a singular or indefinite regularized Gram matrix; callers
    may retry with diagonal jitter.
    """


class InvalidAlpha(ConformaError, ValueError):
    pass


class InvalidProbability(ConformaError, ValueError):
    pass


class EmptyRegion(ConformaError, ValueError):
    pass


class AllPointsFailed(ConformaError, RuntimeError):
    """Every candidate of a hyperparameter grid failed to factorize."""


class UnknownFunction(ConformaError, KeyError):
    pass


class MissingLevel(ConformaError, KeyError):
    pass
