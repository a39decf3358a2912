"""Exception types shared across the package."""


class HensolError(Exception):
    """Base class for all package-specific errors."""


class CertificationFailed(HensolError):
    """A filtration property failed on a sample point.

    The offending point is attached as ``witness``.
    """

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class DoesNotEscape(HensolError):
    """The orbit stayed bounded within the iteration budget."""


class OutsideVPlus(HensolError):
    """Point handed to a V+-only operation lies outside V+."""


class NotEscaping(HensolError):
    """Leaf point has (numerically) zero escape rate."""


class BranchAmbiguity(HensolError):
    """A root-branch selection could not be disambiguated.

    Raised when consecutive continuation samples rotate the argument past
    the safe sector width; callers should refine the path.
    """


class RootPolishFailed(HensolError):
    """Newton polishing of a candidate root did not converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NewtonDiverged(HensolError):
    """A Newton solve failed; ``where`` records the step or level."""

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


class NotSaddle(HensolError):
    """Eigenvalue moduli of the periodic orbit do not straddle 1."""


class NotConverged(HensolError):
    """An iterative evaluation missed its convergence check."""


class AmbiguousPreimage(HensolError):
    """Two polynomial preimages are equidistant within tolerance."""


class UnlandedRay(HensolError):
    """A ray trace needed by an identification check did not land."""


class PartitionMismatch(HensolError):
    """Ray identification partitions disagree; report attached."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
