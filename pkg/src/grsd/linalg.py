"""Dense symmetric linear algebra and logarithmic spectral binning.

This is the substrate for everything else: eigendecompositions of the
positive semidefinite operators built from Jacobians, operator norms used by
the diagnostics, and the fixed-width log-spectrum grid on which shell
statistics are collected.

All functions are pure; returned objects are treated as immutable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AsymmetryError,
    ConvergenceError,
    DimensionMismatchError,
    EmptyWindowError,
    NonSquareError,
)

#: Relative eigenvalue floor: eigenvalues below this fraction of the largest
#: one are excluded from shell statistics (their log-coordinate is meaningless).
EIGENVALUE_FLOOR_RATIO = 1e-12

#: Default number of bins trimmed from each spectral edge to form the
#: intermediate window.
DEFAULT_EDGE_MARGIN = 2


def as_matrix(m) -> np.ndarray:
    """Coerce input to a float64 2-d array and require finite entries."""
    a = np.asarray(m, dtype=float)
    if a.ndim != 2:
        raise DimensionMismatchError(f"expected a matrix, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


@dataclass(frozen=True)
class SymmetricEigenSystem:
    """Eigendecomposition of a symmetric matrix, eigenvalues ascending.

    Attributes
    ----------
    eigenvalues : (n,) array, sorted ascending.
    eigenvectors : (n, n) array, orthonormal columns; column u pairs with
        ``eigenvalues[u]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    def log_coordinates(self, floor: float) -> np.ndarray:
        """log(eigenvalue) with entries below ``floor`` mapped to -inf."""
        lam = self.eigenvalues
        out = np.full(lam.shape, -np.inf)
        keep = lam >= floor
        out[keep] = np.log(lam[keep])
        return out

    def reconstruct(self) -> np.ndarray:
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.T


def symmetric_eigendecompose(m, tol: float = 1e-10) -> SymmetricEigenSystem:
    """Eigendecompose a symmetric matrix.

    The input must be symmetric to within ``tol`` (relative to its largest
    entry); it is symmetrized before factorization so that roundoff in the
    caller cannot leak into the eigenbasis.  Small negative eigenvalues of a
    numerically PSD input (within ``tol`` of zero relative to the largest
    eigenvalue) are clamped to zero so that log-binning sees a clean
    spectrum.

    Raises
    ------
    NonSquareError, AsymmetryError, ConvergenceError
    """
    a = as_matrix(m)
    n, k = a.shape
    if n != k:
        raise NonSquareError(f"matrix is {n}x{k}")
    scale = np.max(np.abs(a)) if a.size else 0.0
    asym = np.max(np.abs(a - a.T)) if a.size else 0.0
    if scale > 0 and asym > tol * scale:
        raise AsymmetryError(f"asymmetry {asym:.3e} exceeds tol*scale {tol * scale:.3e}")
    sym = 0.5 * (a + a.T)
    try:
        lam, phi = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ConvergenceError(str(exc)) from exc
    lam_max = float(np.max(np.abs(lam))) if lam.size else 0.0
    if lam_max > 0:
        # PSD clamp: eigenvalues that are negative only at roundoff level
        negligible = (lam < 0) & (lam >= -tol * lam_max)
        lam = np.where(negligible, 0.0, lam)
    return SymmetricEigenSystem(eigenvalues=lam, eigenvectors=phi)


def operator_norm(m, tol: float = 1e-12) -> float:
    """Largest singular value of ``m``.

    ``tol`` documents the relative accuracy contract; the full SVD used here
    delivers machine precision, far inside any requested tolerance.
    """
    a = as_matrix(m)
    if a.size == 0:
        return 0.0
    try:
        return float(np.linalg.norm(a, 2))
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise ConvergenceError(str(exc)) from exc


def default_floor(eig: SymmetricEigenSystem, ratio: float = EIGENVALUE_FLOOR_RATIO) -> float:
    """Absolute eigenvalue floor derived from the largest eigenvalue."""
    lam_max = float(np.max(eig.eigenvalues)) if eig.dim else 0.0
    if lam_max <= 0:
        return np.inf  # nothing bins: spectrum has no positive part
    return ratio * lam_max


@dataclass(frozen=True)
class LogBinGrid:
    """Uniform partition of ``[s_min, s_min + n_bins*h)`` in s = log(lambda).

    ``window_lo``/``window_hi`` are inclusive bin indices delimiting the
    intermediate spectral window; statistics claimed by the transport theory
    are only evaluated there, away from the spectral edges.
    """

    s_min: float
    n_bins: int
    bin_width: float
    window_lo: int = field(default=-1)
    window_hi: int = field(default=-1)
    edge_margin: int = DEFAULT_EDGE_MARGIN

    def __post_init__(self):
        if self.bin_width <= 0:
            raise ValueError("bin_width must be positive")
        if self.n_bins < 1:
            raise ValueError("need at least one bin")
        if self.window_lo < 0 or self.window_hi < 0:
            lo = min(self.edge_margin, self.n_bins - 1)
            hi = max(self.n_bins - 1 - self.edge_margin, lo)
            object.__setattr__(self, "window_lo", lo)
            object.__setattr__(self, "window_hi", hi)
        if not (0 <= self.window_lo <= self.window_hi <= self.n_bins - 1):
            raise ValueError("window indices out of range")

    @property
    def s_max(self) -> float:
        return self.s_min + self.n_bins * self.bin_width

    @property
    def edges(self) -> np.ndarray:
        """Bin edges in s, length n_bins + 1."""
        return self.s_min + self.bin_width * np.arange(self.n_bins + 1)

    @property
    def centers(self) -> np.ndarray:
        """Bin centers in s."""
        return self.s_min + self.bin_width * (np.arange(self.n_bins) + 0.5)

    @property
    def lambda_centers(self) -> np.ndarray:
        """Geometric bin centers in lambda."""
        return np.exp(self.centers)

    @property
    def lambda_widths(self) -> np.ndarray:
        """Bin widths measured in lambda (for density conversion)."""
        e = np.exp(self.edges)
        return e[1:] - e[:-1]

    @property
    def window_slice(self) -> slice:
        return slice(self.window_lo, self.window_hi + 1)

    @property
    def window_size(self) -> int:
        return self.window_hi - self.window_lo + 1

    def window_bounds_s(self) -> tuple[float, float]:
        """(s_lo, s_hi) of the intermediate window, half-open."""
        return (
            self.s_min + self.window_lo * self.bin_width,
            self.s_min + (self.window_hi + 1) * self.bin_width,
        )

    def contains_bin(self, idx: int) -> bool:
        return self.window_lo <= idx <= self.window_hi

    @classmethod
    def from_bounds(cls, s_min: float, s_max: float, bin_width: float,
                    edge_margin: int = DEFAULT_EDGE_MARGIN) -> "LogBinGrid":
        """Grid covering [s_min, s_max); s_max rounded up to a whole bin."""
        if s_max <= s_min:
            raise ValueError("s_max must exceed s_min")
        n = int(math.ceil((s_max - s_min) / bin_width - 1e-12))
        return cls(s_min=s_min, n_bins=max(n, 1), bin_width=bin_width,
                   edge_margin=edge_margin)

    @classmethod
    def from_eigenvalues(cls, eig: SymmetricEigenSystem, bin_width: float,
                         floor: float | None = None,
                         edge_margin: int = DEFAULT_EDGE_MARGIN) -> "LogBinGrid":
        """Grid spanning the retained spectrum of ``eig``."""
        if floor is None:
            floor = default_floor(eig)
        s = eig.log_coordinates(floor)
        s = s[np.isfinite(s)]
        if s.size == 0:
            raise EmptyWindowError("no eigenvalue above floor")
        lo = float(np.min(s))
        hi = float(np.max(s))
        # push the top edge out so the max eigenvalue lands inside the last bin
        return cls.from_bounds(lo, hi + 1e-9 * max(1.0, abs(hi)), bin_width,
                               edge_margin=edge_margin)


def assign_log_bins(eig: SymmetricEigenSystem, grid: LogBinGrid,
                    floor: float) -> np.ndarray:
    """Map each eigenvalue to its bin index; excluded eigenvalues get -1.

    Eigenvalues below ``floor`` or outside the grid range are flagged with -1
    rather than binned.  Bins are half-open ``[s_a, s_{a+1})`` so a value
    sitting exactly on a boundary joins the upper bin.

    Raises
    ------
    EmptyWindowError
        If no retained eigenvalue lands inside the intermediate window.
    """
    if floor <= 0:
        raise ValueError("floor must be positive")
    s = eig.log_coordinates(floor)
    idx = np.full(eig.dim, -1, dtype=int)
    finite = np.isfinite(s)
    raw = np.floor((s[finite] - grid.s_min) / grid.bin_width).astype(int)
    ok = (raw >= 0) & (raw < grid.n_bins)
    pos = np.flatnonzero(finite)
    idx[pos[ok]] = raw[ok]
    in_window = (idx >= grid.window_lo) & (idx <= grid.window_hi)
    if not np.any(in_window):
        raise EmptyWindowError("no retained eigenvalue inside the intermediate window")
    return idx


def bin_populations(bin_indices: np.ndarray, grid: LogBinGrid) -> np.ndarray:
    """Count of retained eigenvalues per bin."""
    kept = bin_indices[bin_indices >= 0]
    return np.bincount(kept, minlength=grid.n_bins)
