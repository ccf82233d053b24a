"""Statistical significance of near-linear separability for two samples."""
from .errors import (
    BudgetError,
    DegeneracyError,
    InapplicableBoundError,
    InputError,
    SepstatError,
    UnsupportedAssumptionError,
)
from .geometry import Certificate, DirectedSeparator, PointSet, orientation, perturb
from .separability import LabeledSample, Metric, min_errors
from .bounds import Assumption, BoundReport
from .inference import PermutationConfig, TestOutcome

__all__ = [
    "Assumption",
    "BoundReport",
    "BudgetError",
    "Certificate",
    "DegeneracyError",
    "DirectedSeparator",
    "InapplicableBoundError",
    "InputError",
    "LabeledSample",
    "Metric",
    "PermutationConfig",
    "PointSet",
    "SepstatError",
    "TestOutcome",
    "UnsupportedAssumptionError",
    "min_errors",
    "orientation",
    "perturb",
]

__version__ = "0.1.0"
