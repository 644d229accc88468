"""
Error types for the spectral toolkit.

Numerical conditions and configuration problems are kept apart so the
command line can map them onto distinct exit codes.
"""


class SpectralToolError(RuntimeError):
    """Base class for every error raised by this package."""


# ----------------------------------------------------------------------
# Configuration
# ----------------------------------------------------------------------

class ConfigError(SpectralToolError):
    """Invalid configuration or usage. The message names the field."""


class BadPhaseError(ConfigError):
    """A hull phase that the requested potential family cannot accept."""


# ----------------------------------------------------------------------
# Potentials
# ----------------------------------------------------------------------

class PotentialError(SpectralToolError):
    pass


class PotentialBoundError(PotentialError):
    """A sampled potential value exceeds the declared bound M."""


class PotentialIndexError(PotentialError):
    """A file-backed potential was queried outside its stored index range."""


# ----------------------------------------------------------------------
# Numerical conditions
# ----------------------------------------------------------------------

class NumericalError(SpectralToolError):
    pass


class DeterminantDriftError(NumericalError):
    """Accumulated round-off pushed a matrix out of SL(2,R)."""


class NearRotationError(NumericalError):
    """Singular directions are undefined because the matrix is a rotation."""


class DirectionsUndefinedError(NumericalError):
    pass


class SolutionOverflowError(NumericalError):
    """A recurrence solution left the representable range (|u_n| > 1e300)."""


class DegenerateNormError(NumericalError):
    pass


class DegenerateDirectionsError(NumericalError):
    """Unstable and stable directions coincide, so no Wronskian normalization exists."""


class SupportNotFoundError(NumericalError):
    """No finitely supported vector reached the requested defect."""


class ConsistencyViolationError(NumericalError):
    """Resolvent and spectrum tests both passed at one energy."""


class GridMismatchError(NumericalError):
    pass


class WindowCoverageError(NumericalError):
    """A certificate does not cover the requested window with enough margin."""


class NonDecayingKernelError(NumericalError):
    pass


# ----------------------------------------------------------------------
# Artifacts
# ----------------------------------------------------------------------

class ArtifactIOError(SpectralToolError):
    """An output artifact could not be written."""
