"""Exception and warning types raised by the solvers and the harness."""


class ElectroDiffError(Exception):
    """Base class for all package errors."""


class NonZeroMeanError(ElectroDiffError, ValueError):
    """Right-hand side of a periodic Poisson problem has nonzero mean."""


class ModeOutOfBandError(ElectroDiffError, ValueError):
    """A requested Fourier mode is not representable after dealiasing."""


class LambdaZeroError(ElectroDiffError, ValueError):
    """The Debye-length system was called with lambda == 0."""


class NotConvergedError(ElectroDiffError):
    """Iterative elliptic solve did not reach its tolerance."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class SolverFailure(ElectroDiffError):
    """Time integration stopped early; ``trajectory`` holds what was computed."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class BlowUpError(SolverFailure):
    """A field norm exceeded the blow-up threshold."""


class AbortOnNegativeDensityError(SolverFailure):
    """A charge density went below the abort threshold."""


class NonPositiveZError(SolverFailure):
    """Total density ``Z`` fell below the admissible floor ``kappa0 / 2``."""


class MisalignedSnapshotsError(ElectroDiffError, ValueError):
    """Snapshots passed to the error diagnostics do not share a time."""


class InsufficientDataError(ElectroDiffError, ValueError):
    """Too few points for a rate fit."""


class ConfigError(ElectroDiffError, ValueError):
    """Invalid experiment configuration."""


class NegativeDensityWarning(UserWarning):
    """A recovered or evolved charge density is not strictly positive."""
