"""Exception hierarchy and CLI exit-code mapping.

Data problems (bad files, empty arms, degenerate replicates) are kept
separate from numerical failures (separation, singular matrices) so the
command-line tools can report distinct exit codes.
"""

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


class TrialGenError(Exception):
    """Base class for all package errors."""

    exit_code = EXIT_VALIDATION


class DataError(TrialGenError):
    """Invalid or unusable input data."""

    exit_code = EXIT_VALIDATION


class MissingColumnError(DataError):
    """A required column is absent from the input file."""


class NonBinaryIndicatorError(DataError):
    """Trial or treatment indicator outside {0, 1}."""


class OutcomeOnPopulationRowError(DataError):
    """Outcome recorded for a target-population row; rejected as ambiguous."""


class TreatmentOnPopulationRowError(DataError):
    """Treatment recorded for a target-population row."""


class MissingTrialValueError(DataError):
    """A trial row lacks its treatment or outcome value."""


class MalformedNumberError(DataError):
    """A cell could not be parsed as a number."""


class EmptyArmError(DataError):
    """A trial arm has no (or too few) usable subjects."""


class ZeroWeightArmError(DataError):
    """A trial arm carries zero total weight."""


class MissingWeightsError(DataError):
    """Weighted fit requested without a weight vector."""


class DegenerateReplicateError(DataError):
    """Generated replicate too small to analyze (tiny trial or empty population)."""


class NumericalError(TrialGenError):
    """Numerical failure during estimation."""

    exit_code = EXIT_NUMERICAL


class SeparationError(NumericalError):
    """Logistic fit diverging: a coefficient escaped toward infinity."""


class RankDeficientError(NumericalError):
    """Design matrix not of full column rank."""


class PSNotConvergedError(NumericalError):
    """Downstream computation requested on a non-converged membership fit."""


class DegeneratePSError(NumericalError):
    """Fitted membership probability at 0 or 1; weights would not be finite."""


class SingularInformationError(NumericalError):
    """Information matrix in the sandwich variance could not be inverted."""


class TooManyFailedResamplesError(NumericalError):
    """More than the tolerated share of bootstrap resamples failed."""
