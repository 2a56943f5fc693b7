"""Exception types shared across the package."""


class LabError(ValueError):
    """Base class for rejected inputs and failed preconditions."""


class GridError(LabError):
    """Invalid grid, mismatched grids, or non-finite samples."""


class WeightOverflowError(LabError):
    """An exponential weight would overflow double precision.

    ``exponent`` carries the largest natural-log exponent encountered.
    """

    def __init__(self, message, exponent):
        super().__init__(message)
        self.exponent = exponent


class ResolutionError(LabError):
    """The grid does not resolve the requested object."""


class FitError(LabError):
    """Too few usable samples for a regression."""


class PreconditionError(LabError):
    """A documented precondition of an operation does not hold."""


class EvolutionError(RuntimeError):
    """Time integration produced non-finite values."""

    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


class ConfigError(LabError):
    """Configuration text failed validation.

    ``problems`` lists every ``(line_number, message)`` found, line 0 meaning
    the problem is not tied to a particular line.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        text = "; ".join(
            f"line {ln}: {msg}" if ln else msg for ln, msg in self.problems)
        super().__init__(text)
