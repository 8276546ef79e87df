"""
Error types for slow-birkhoff.
Every error carries the process exit code the command layer reports for it.
"""


class SlowBirkhoffError(Exception):
    """Base class for all expected failures."""

    exit_code = 1


class ConfigError(SlowBirkhoffError, ValueError):
    """Configuration file could not be read or failed validation."""


class MalformedSpec(SlowBirkhoffError, ValueError):
    """A saved function specification could not be parsed."""


class PreconditionViolated(SlowBirkhoffError, ValueError):
    """Inputs break an operation's precondition."""


class BudgetExhausted(SlowBirkhoffError):
    """The stage would push the removed measure past the budget."""


class RankCapExceeded(SlowBirkhoffError):
    """A dyadic result would need more binary digits than the rank cap allows."""


class TowerPrecisionError(SlowBirkhoffError, ValueError):
    """Target measure too small for the requested precision (base would be empty)."""


class ExactThresholdExceeded(SlowBirkhoffError):
    """Exact computation requested beyond its configured size."""


class LatticeBudgetExceeded(SlowBirkhoffError):
    """N^n lattice points exceed the configured evaluation budget."""


class ScaleSearchExhausted(SlowBirkhoffError):
    """No admissible scale found below the hard cap."""


class MaterializationLimitExceeded(SlowBirkhoffError):
    """An explicit interval or box listing would be too large."""


class CertificationFailed(SlowBirkhoffError):
    """A deviation guarantee could not be certified."""

    exit_code = 2
