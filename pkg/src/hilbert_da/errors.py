"""Exception types raised by the package."""


class HilbertDAError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(HilbertDAError, ValueError):
    pass


class IndexOutOfRange(HilbertDAError, IndexError):
    pass


class NonFiniteResult(HilbertDAError, ArithmeticError):
    pass


class SingularInnerSystem(HilbertDAError, ArithmeticError):
    pass


class UnsupportedLaw(HilbertDAError, ValueError):
    pass


class DecompositionFailure(HilbertDAError, ArithmeticError):
    pass


class RankDeficient(HilbertDAError, ValueError):
    pass


class DegenerateEnsemble(HilbertDAError, ValueError):
    pass


class SingularInnovation(HilbertDAError, ArithmeticError):
    pass


class SingularR(HilbertDAError, ValueError):
    """Data error covariance is not symmetric positive definite."""


class AllWeightsZero(HilbertDAError, ArithmeticError):
    """Every particle likelihood underflowed; the particle set is degenerate."""


class ConsistencyError(HilbertDAError, AssertionError):
    """Two algebraically equivalent formulas disagreed beyond tolerance."""


class ConfigError(HilbertDAError, ValueError):
    pass
