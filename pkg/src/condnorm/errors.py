"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: schema/alignment problems are input
errors (exit 2), fitting and estimation failures are exit 3, bootstrap
failures are exit 4.
"""


class CondnormError(Exception):
    """Base class for all package-specific errors."""


class SchemaError(CondnormError):
    """Malformed input file, unknown column, or incompatible model schema."""


class AlignmentError(CondnormError):
    """Series grids disagree (spacing, phase, or length)."""


class OverlapError(AlignmentError):
    """Series share a grid spacing but have no common time range."""


class BasisError(CondnormError):
    """A spline basis cannot be constructed from the given data."""


class FitError(CondnormError):
    """Model fitting failed; the message carries the last-iterate diagnostics."""


class EstimationError(CondnormError):
    """Not enough usable data for an estimation step."""


class ContractError(CondnormError):
    """An internal precondition was violated by the caller."""


class BootstrapError(CondnormError):
    """Too many bootstrap replicates failed to refit."""
