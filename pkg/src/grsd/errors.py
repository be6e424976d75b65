"""Exception hierarchy shared across the package.

Every failure mode that callers are expected to handle gets its own class so
that batch runners can map errors to exit codes and condition labels without
string matching.
"""

from __future__ import annotations


class GrsdError(Exception):
    """Base class for all package errors."""


# -- linear algebra ---------------------------------------------------------

class NonSquareError(GrsdError):
    """Matrix is not square where a square operator is required."""


class AsymmetryError(GrsdError):
    """Symmetric input deviates from its transpose beyond tolerance."""


class ConvergenceError(GrsdError):
    """An iterative factorization failed to converge."""


class EmptyWindowError(GrsdError):
    """No retained eigenvalue falls inside the intermediate window."""


class DimensionMismatchError(GrsdError):
    """Operands do not conform."""


# -- configuration builders -------------------------------------------------

class InfeasibleProfileError(GrsdError):
    """Requested incoherence profile cannot be realized at these dimensions."""


class UnstableSSMError(GrsdError):
    """Measured propagator growth violates the declared stability bound."""


# -- gradient flow ----------------------------------------------------------

class DivergedTrajectoryError(GrsdError):
    """Trajectory guard tripped (loss or parameter norm exceeded bounds)."""


class NonFiniteGradientError(GrsdError):
    """Gradient evaluation produced NaN or infinity."""


class BoundarySampleError(GrsdError):
    """Central difference requested at a trajectory endpoint."""


# -- shell dynamics ---------------------------------------------------------

class TooFewSamplesError(GrsdError):
    """Fewer time samples than the differencing scheme needs."""


class AllBinsBelowFloorError(GrsdError):
    """Every bin density is below the reporting floor."""


class InsufficientSamplesError(GrsdError):
    """Not enough in-window samples to fit."""


class MixedSignVelocitiesError(GrsdError):
    """Velocity samples change sign inside the fit window."""


class RangeExceededError(GrsdError):
    """Shifted evaluation points fall outside the sampled field."""


# -- condition diagnostics --------------------------------------------------

class DivergentWeightedSumError(GrsdError):
    """Weighted envelope sum is not finite under the requested weight base."""


class EmptyBinPairError(GrsdError):
    """Too few populated bins in the window to form any coupling pair."""


# -- residual chains --------------------------------------------------------

class ZeroVectorError(GrsdError):
    """Propagated direction collapsed below the norm floor."""

    def __init__(self, layer: int, norm: float):
        super().__init__(f"direction norm {norm:.3e} below floor at layer {layer}")
        self.layer = layer
        self.norm = norm


class DegenerateVarianceError(GrsdError):
    """Ensemble variance too small to standardize."""


class InvalidToleranceError(GrsdError):
    """Tolerance parameter outside its admissible range."""


class GridMismatchError(GrsdError):
    """Per-layer reports do not share one grid."""


# -- experiment runner ------------------------------------------------------

class SchemaViolationError(GrsdError):
    """Config file failed schema validation."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class RecipeRuntimeError(GrsdError):
    """A recipe failed while computing diagnostics."""
