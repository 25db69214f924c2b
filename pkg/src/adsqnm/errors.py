"""Exception hierarchy shared by all modules."""


class AdsQnmError(Exception):
    """Base class for every error raised by the package."""


# geometry
class NoHorizon(AdsQnmError):
    """Delta_r has no positive root: the parameters describe a naked singularity."""


class DegenerateHorizon(AdsQnmError):
    """The outermost root of Delta_r is not simple."""


class OutsideChart(AdsQnmError):
    """A spacetime point lies outside the domain of the requested chart."""


class QuadratureFailure(AdsQnmError):
    """Adaptive quadrature could not reach the requested tolerance."""


# symbol_flow
class AmbiguousClassification(AdsQnmError):
    """A characteristic covector pairs to (numerically) zero with dt*."""


class StepSizeUnderflow(AdsQnmError):
    """The flow integrator could not take a step satisfying its controls.

    Attributes
    ----------
    trajectory : FlowTrajectory or None
        Samples accepted before the failure.
    """

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


# operator
class InvalidCounts(AdsQnmError):
    """Requested node counts are below the supported minimum."""


class AssemblyFailure(AdsQnmError):
    """A coefficient evaluated to a non-finite value during assembly."""


# spectra
class LinearizationFailure(AdsQnmError):
    """The companion pencil is singular."""


class NoEigenvaluesInRegion(AdsQnmError):
    """The eigen-solve produced no eigenvalue inside the search region."""


class NotFound(AdsQnmError):
    """No pole lies inside the matching window.

    Attributes
    ----------
    nearest : complex or None
    distance : float
    """

    def __init__(self, message, nearest=None, distance=float("inf")):
        super().__init__(message)
        self.nearest = nearest
        self.distance = distance


# quasimodes
class NoTrappedModes(AdsQnmError):
    """The truncated problem has no nearly-real eigenvalue in range."""


class CutoffTooSharp(AdsQnmError):
    """Quasimode residual is dominated by differentiating the cutoff."""


class InsufficientResolution(AdsQnmError):
    """Fewer than four converged quasimode branches are available."""


# energy
class NonConvergedInput(AdsQnmError):
    """The mode handed to the energy identity is not resolved on the grid."""


# cli
class ConfigInvalid(AdsQnmError):
    """A run configuration failed schema or physical validation."""


class StageFailure(AdsQnmError):
    """A pipeline stage raised; the manifest records which one."""


class MissingStageOutput(AdsQnmError):
    """An export or plot needs a file that the run did not produce."""
