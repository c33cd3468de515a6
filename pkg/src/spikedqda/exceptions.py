"""Exception types raised by the estimators, classifiers and the harness."""


class SpikedQdaError(Exception):
    """Base class for errors raised by this package."""


class SpikedQdaWarning(UserWarning):
    """Base class for warnings issued by this package (clamped estimates,
    conditioning problems, non-convergence)."""


class SpikeUndetectableError(SpikedQdaError):
    """A sample eigenvalue lies below the noise bulk edge, so the
    corresponding population spike cannot be recovered from it."""


class DegenerateSeparationError(SpikedQdaError):
    """The de-biased squared distance between class means is not positive;
    the two classes are indistinguishable at this sample size."""


class DegenerateObjectiveError(SpikedQdaError):
    """The separation constant of the weight optimization vanished, so the
    optimum is not attained at a finite weight vector."""


class VarianceDegeneracyError(SpikedQdaError):
    """A quantity that must be a positive variance came out non-positive."""


class ConfigError(SpikedQdaError):
    """Invalid experiment configuration (CLI flag or config file)."""


class DataError(SpikedQdaError):
    """A dataset file is missing, malformed, or unusable."""
