"""Exception hierarchy shared by all modules."""


class HplodError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(HplodError, ValueError):
    """Invalid user input: mesh sizes, degrees, sweep lists, model flags."""


class NonNestedMeshes(ConfigError):
    pass


class NonPositiveCoefficient(ConfigError):
    pass


class EmptyPatch(ConfigError):
    pass


class NumericalError(HplodError, ArithmeticError):
    """A factorization or solve failed."""


class NotPositiveDefinite(NumericalError):
    pass


class RankDeficientConstraints(NumericalError):
    """The constraint block of a saddle-point problem lost full row rank.

    On patch problems this usually means the fine mesh is too coarse for the
    requested polynomial degree (h should be well below H / p**2).
    """


class SingularCoarseSystem(NumericalError):
    pass


class DofCapExceeded(HplodError, MemoryError):
    pass
