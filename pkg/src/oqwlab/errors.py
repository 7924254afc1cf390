"""Exception hierarchy shared across the package.

The CLI maps ``ValidationError`` to exit status 2 and every other
``OQWError`` to exit status 3.
"""


class OQWError(Exception):
    """Base class for all errors raised by oqwlab."""


class ValidationError(OQWError):
    """Invalid input: malformed config, incomplete Kraus set, bad probabilities."""


class DimensionError(ValidationError, ValueError):
    """Operators or states with mismatched shapes."""


class NonUniqueInvariantError(OQWError):
    """A channel that was assumed to have a unique invariant state does not."""


class WindowOverflowError(OQWError):
    """Probability mass reached the edge of a finite evolution window."""


class ProbabilityError(OQWError):
    """Branch probabilities of a trajectory step do not sum to one."""
