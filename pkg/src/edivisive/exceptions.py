"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    """Input data or parameters violate a documented precondition."""


class DegenerateSplitError(ValueError):
    """A split leaves a cluster with fewer than two observations."""


class ParseError(ValueError):
    """A delimited input table could not be read."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DuplicateDataError(ParseError):
    """The same (year, week, sex) appears on more than one row."""


class MissingBaselineError(ValueError):
    """A group-week cell has no observation in the baseline years."""


class ZeroMedianError(ValueError):
    """An excess rate would divide by a zero baseline median."""


class InvalidSpanError(ValueError):
    """A requested week range is missing weeks or groups."""
