"""Exception hierarchy; each family maps to one CLI exit code."""


class DesignError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class InvalidInputError(DesignError, ValueError):
    exit_code = 2


class InstanceParseError(InvalidInputError):
    pass


class DimensionMismatchError(InvalidInputError):
    pass


class NonFiniteError(InvalidInputError):
    pass


class BudgetRangeError(InvalidInputError):
    pass


class InfeasibleError(DesignError):
    """Relaxation infeasible or objective undefined everywhere."""

    exit_code = 3


class DegenerateMeasureError(InfeasibleError):
    """All conditional probabilities vanished during sampling."""


class SizeCapError(DesignError):
    """Enumeration would exceed the configured state cap."""

    exit_code = 4
