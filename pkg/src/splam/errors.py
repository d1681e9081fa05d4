"""Exception types shared across the package."""


class SplamError(Exception):
    """Base class for all package-specific errors."""


class InvalidOrder(SplamError, ValueError):
    """Spline order (or basis dimension) outside the valid range."""


class DegenerateSample(SplamError, ValueError):
    """Sample cannot support the requested construction (constant column, too few distinct values)."""


class OutOfRange(SplamError, ValueError):
    """Evaluation point lies outside the basis interval in strict mode."""


class AllZeroResiduals(SplamError, ValueError):
    """Scale of an identically-zero residual vector is undefined."""


class ZeroMAD(SplamError, ValueError):
    """Median absolute deviation is zero; robust standardization undefined."""


class InvalidHyperparameter(SplamError, ValueError):
    """Penalty or loss hyperparameter outside its valid domain."""


class NonDifferentiableAtZero(SplamError, ValueError):
    """Penalty derivative requested at the origin where it does not exist."""


class DimensionMismatch(SplamError, ValueError):
    """Array shapes inconsistent with the model layout."""


class SchemaError(SplamError, ValueError):
    """Input table does not match the declared columns or contains non-numeric cells."""


class SingularDesign(SplamError, RuntimeError):
    """Design matrix is rank-deficient or too small to identify the model."""


class SingularSystem(SplamError, RuntimeError):
    """Linear system of an iteration step cannot be solved."""


class NoConvergence(SplamError, RuntimeError):
    """Iterative procedure failed to reach its stopping rule."""
