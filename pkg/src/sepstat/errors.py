"""Exception hierarchy; the CLI maps these onto exit codes."""


class SepstatError(Exception):
    """Base class for all library errors."""


class InputError(SepstatError, ValueError):
    """Malformed or out-of-domain input."""


class DegeneracyError(InputError):
    """Points are not in general position."""


class InapplicableBoundError(InputError):
    """A bound's validity condition does not hold for the given sizes."""


class UnsupportedAssumptionError(InputError):
    """The requested bound does not exist under the given assumption."""


class BudgetError(SepstatError):
    """Projected work exceeds the configured budget; use Monte-Carlo instead."""
