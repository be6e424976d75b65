"""Quantitative diagnostics for the four structural conditions.

Each condition becomes a measurable scalar with a configurable threshold:

1. banded evolution   -> relative residual of projecting Jdot blocks onto
                         the span of nearby blocks;
2. initial incoherence-> distance-profile envelope of cross-block Gram norms
                         and its weighted sum, with the exponential envelope
                         bound checked along the path;
3. controlled path    -> suprema of ||J||_op and ||Jdot||_op;
4. log-shift invariance -> stationarity error of log-bin coupling statistics
                         (distance of the bin-coupling matrix from the best
                         offset-only kernel).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .configs import BlockJacobian
from .errors import (
    DimensionMismatchError,
    DivergentWeightedSumError,
    EmptyBinPairError,
)
from .linalg import (
    LogBinGrid,
    SymmetricEigenSystem,
    assign_log_bins,
    default_floor,
    operator_norm,
)

RIDGE_RATIO = 1e-12
SPAN_MEMBERSHIP_TOL = 1e-8
DEFAULT_WEIGHT_BASE = 0.5


# ---------------------------------------------------------------------------
# Condition 1: banded Jacobian evolution
# ---------------------------------------------------------------------------

def _ridge_project(predictors: np.ndarray, target: np.ndarray):
    """Least-squares projection of target columns onto span(predictors).

    Solves the normal equations through an eigendecomposition with a ridge
    of RIDGE_RATIO times the largest normal-matrix eigenvalue; returns
    (residual_fro, rank_deficient_flag).
    """
    gram = predictors.T @ predictors
    w, v = np.linalg.eigh(gram)
    lam_max = float(w[-1]) if w.size else 0.0
    if lam_max <= 0.0:
        return float(np.linalg.norm(target)), True
    ridge = RIDGE_RATIO * lam_max
    rhs = predictors.T @ target
    coef = v @ ((v.T @ rhs) / (w + ridge)[:, None])
    resid = target - predictors @ coef
    deficient = bool(w[0] < 1e-10 * lam_max)
    return float(np.linalg.norm(resid)), deficient


def bandedness_residual(blocks: BlockJacobian, rate: BlockJacobian, K: int):
    """r_l(K) for every block l, plus rank-deficiency flags.

    r_l(K) = ||Jdot^(l) - P_K Jdot^(l)||_F / ||Jdot^(l)||_F where P_K
    projects onto the column span of the stacked blocks at distance <= K.
    Zero-rate blocks report r = 0 by convention.
    """
    if rate.depth != blocks.depth or rate.block_dims != blocks.block_dims:
        raise DimensionMismatchError("rate blocks do not conform with blocks")
    L = blocks.depth
    residuals = np.zeros(L)
    flags = np.zeros(L, dtype=bool)
    for l in range(L):
        target = rate.blocks[l]
        t_norm = float(np.linalg.norm(target))
        if t_norm == 0.0:
            continue
        lo, hi = max(0, l - K), min(L - 1, l + K)
        predictors = np.hstack(blocks.blocks[lo:hi + 1])
        r, deficient = _ridge_project(predictors, target)
        residuals[l] = r / t_norm
        flags[l] = deficient
    return residuals, flags


def bandedness_profile(blocks: BlockJacobian, rate: BlockJacobian, l: int,
                       k_max: int) -> np.ndarray:
    """r_l(K) for K = 0..k_max via one QR pass over distance-ordered blocks.

    Predictor blocks are stacked in rings of increasing |m - l|; because QR
    preserves prefix spans, the cumulative squared projection of the target
    onto the first columns gives every prefix residual from a single
    factorization.  Agrees with :func:`bandedness_residual` up to the ridge
    (~1e-12 relative).
    """
    L = blocks.depth
    cols = [blocks.blocks[l]]
    ring_end = [1]
    for k in range(1, k_max + 1):
        for m in (l - k, l + k):
            if 0 <= m < L:
                cols.append(blocks.blocks[m])
        ring_end.append(len(cols))
    pred = np.hstack(cols)
    target = rate.blocks[l]
    t_norm2 = float(np.sum(target * target))
    if t_norm2 == 0.0:
        return np.zeros(k_max + 1)
    q, _ = np.linalg.qr(pred)
    coef2 = np.sum((q.T @ target) ** 2, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(coef2)])
    out = np.empty(k_max + 1)
    widths = [b.shape[1] for b in cols]
    col_end = np.cumsum(widths)
    for k in range(k_max + 1):
        c = col_end[ring_end[k] - 1]
        out[k] = math.sqrt(max(t_norm2 - cum[c], 0.0) / t_norm2)
    return out


@dataclass(frozen=True)
class BandednessReport:
    """Residual profiles r_l(K), effective ranges, and the fitted decay."""

    k_values: tuple
    block_indices: tuple
    residuals: np.ndarray       # (n_blocks, n_K)
    summary: np.ndarray         # per-K median over the evaluated blocks
    decay_rate: float           # fitted rate of exp decay of summary(K)
    decay_prefactor: float
    effective_range: dict       # delta -> K_delta (or None if never reached)

    def k_delta(self, delta: float):
        return self.effective_range.get(delta)


def bandedness_report(blocks: BlockJacobian, rate: BlockJacobian,
                      k_max: int, deltas=(1e-3,), block_indices=None,
                      fit_floor: float = 1e-5, fit_ceiling: float = 0.5,
                      fit_k_min: int = 2) -> BandednessReport:
    """Scan r_l(K) over K = 0..k_max, fit the exponential tail, extract K_delta.

    ``block_indices`` defaults to three blocks in the lower-middle of the
    stack (they see the longest downstream neighborhoods, where the decay
    is cleanest).  The decay fit regresses log(summary) on K over the range
    (fit_floor, fit_ceiling) with K >= fit_k_min; K_delta is the smallest K
    whose summary residual is at or below delta.
    """
    L = blocks.depth
    if block_indices is None:
        block_indices = sorted({L // 6, L // 4, L // 3}) if L >= 6 else list(range(L))
    block_indices = [int(b) for b in block_indices]
    res = np.stack([bandedness_profile(blocks, rate, l, k_max)
                    for l in block_indices])
    summary = np.median(res, axis=0)
    ks = np.arange(k_max + 1)

    keep = (summary > fit_floor) & (summary < fit_ceiling) & (ks >= fit_k_min)
    rate_fit = math.nan
    pref = math.nan
    if np.count_nonzero(keep) >= 2:
        slope, intercept = np.polyfit(ks[keep], np.log(summary[keep]), 1)
        rate_fit = -float(slope)
        pref = math.exp(float(intercept))
    eff = {}
    for d in deltas:
        below = ks[summary <= d]
        eff[d] = int(below[0]) if below.size else None
    return BandednessReport(k_values=tuple(ks), block_indices=tuple(block_indices),
                            residuals=res, summary=summary, decay_rate=rate_fit,
                            decay_prefactor=pref, effective_range=eff)


# ---------------------------------------------------------------------------
# Condition 2: incoherence envelope and its growth bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IncoherenceReport:
    """Distance-profile envelope u_k(t) and the weighted-sum growth check."""

    times: np.ndarray
    envelope: np.ndarray        # (T, L) u_k at each sample
    weighted_sum: np.ndarray    # (T,) U(t) = sum_k rho_w^k u_k(t)
    weight_base: float
    growth_rate_estimate: float  # max_t d(log U)/dt
    theoretical_rate: float | None
    margin: float               # min_t e^{rate*t} U(0) - U(t) for the rate used

    def gronwall_margin(self, rate: float) -> float:
        u0 = self.weighted_sum[0]
        return float(np.min(np.exp(rate * self.times) * u0 - self.weighted_sum))

    def passes(self, tol: float = 1e-8) -> bool:
        return self.margin >= -tol


def envelope_from_blocks(bj: BlockJacobian) -> np.ndarray:
    """u_k = sup over |l-m| = k of the cross-Gram operator norms."""
    L = bj.depth
    norms = bj.cross_gram_norms()
    return np.array([max(norms[l, l + k] for l in range(L - k)) for k in range(L)])


def theoretical_growth_rate(c_a: float, bandwidth: int, weight_base: float) -> float:
    """C_rho = 2 * C_A * sum_{j=-K..K} rho_w^{-j} from the envelope bound."""
    js = np.arange(-bandwidth, bandwidth + 1)
    return 2.0 * c_a * float(np.sum(weight_base ** (-js)))


def incoherence_envelope(blocks_over_time, weight_base: float = DEFAULT_WEIGHT_BASE,
                         times=None, theoretical_rate: float | None = None) -> IncoherenceReport:
    """Measure u_k(t), U(t) and check the exponential growth envelope.

    The growth constant is estimated as the largest finite-difference slope
    of log U; the margin is evaluated against ``theoretical_rate`` when
    given (the honest bound with the simulator's measured coefficient budget)
    and against the estimate otherwise.
    """
    if not (0.0 < weight_base < 1.0):
        raise ValueError("weight_base must lie strictly inside (0, 1)")
    bjs = list(blocks_over_time)
    if len(bjs) < 2:
        raise ValueError("need at least two time samples")
    if times is None:
        times = np.array([bj.time_stamp for bj in bjs], dtype=float)
    else:
        times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    env = np.array([envelope_from_blocks(bj) for bj in bjs])
    weights = weight_base ** np.arange(env.shape[1])
    u = env @ weights
    if not np.all(np.isfinite(u)):
        raise DivergentWeightedSumError("weighted envelope sum is not finite")
    dlog = np.diff(np.log(u)) / np.diff(times)
    rate_est = float(np.max(dlog))
    rate_for_margin = theoretical_rate if theoretical_rate is not None else rate_est
    margin = float(np.min(np.exp(rate_for_margin * times) * u[0] - u))
    return IncoherenceReport(times=times, envelope=env, weighted_sum=u,
                             weight_base=weight_base,
                             growth_rate_estimate=rate_est,
                             theoretical_rate=theoretical_rate, margin=margin)


# ---------------------------------------------------------------------------
# Condition 3: controlled path norms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PathNormReport:
    sup_jacobian: float
    sup_rate: float
    c_j: float
    diverged: bool


def controlled_path_norms(trajectory) -> PathNormReport:
    """Suprema of ||J||_op and ||Jdot||_op over the stored samples.

    Works on any object exposing ``jacobians``/``jacobian_rates`` sequences
    of BlockJacobian (gradient-flow trajectories and banded block paths
    both do).  A divergence flag on the trajectory is passed through; the
    reported suprema then refer to the last finite samples.
    """
    nj = max(operator_norm(b.concatenated()) for b in trajectory.jacobians)
    nr = max(operator_norm(b.concatenated()) for b in trajectory.jacobian_rates)
    return PathNormReport(sup_jacobian=float(nj), sup_rate=float(nr),
                          c_j=float(nj + nr),
                          diverged=bool(getattr(trajectory, "diverged", False)))


# ---------------------------------------------------------------------------
# Condition 4: log-bin coupling statistics
# ---------------------------------------------------------------------------

def stationarity_error(coupling: np.ndarray, mask: np.ndarray | None = None):
    """Distance of a bin-coupling matrix from the best offset-only kernel.

    The kernel value at offset d = j - i is the mean of the couplings along
    that anti-diagonal (over unmasked entries); the error is the relative
    Frobenius distance of the matrix from the kernel's back-projection.
    Returns ``(err, offsets, kernel_values)``; a zero matrix reports err 0.
    """
    k = np.asarray(coupling, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise DimensionMismatchError("coupling matrix must be square")
    b = k.shape[0]
    if mask is None:
        mask = np.ones_like(k, dtype=bool)
    offsets = np.arange(-(b - 1), b)
    idx = np.subtract.outer(np.arange(b), np.arange(b)).T  # j - i
    kernel = np.zeros(offsets.size)
    for pos, d in enumerate(offsets):
        sel = (idx == d) & mask
        kernel[pos] = float(np.mean(k[sel])) if np.any(sel) else 0.0
    proj = kernel[idx + (b - 1)]
    num = float(np.linalg.norm((k - proj)[mask]))
    den = float(np.linalg.norm(k[mask]))
    err = 0.0 if den == 0.0 else num / den
    return err, offsets, kernel


@dataclass(frozen=True)
class GapCouplingStats:
    """Gap-restricted transfer couplings Omega = X_uv / (lambda_v - lambda_u)."""

    gap_floor: float
    n_pairs: int
    max_abs: float
    rms: float


@dataclass(frozen=True)
class LogShiftReport:
    """Bin-coupling statistics over the intermediate window."""

    grid: LogBinGrid
    window_bins: tuple            # original bin indices entering the matrices
    populations: np.ndarray       # eigenvalue count per window bin
    coupling_power: np.ndarray    # mean squared (renormalized) couplings
    coupling_mean: np.ndarray     # mean signed couplings (linear in A)
    kernel_offsets: np.ndarray
    kernel_values: np.ndarray     # offset kernel of coupling_power
    stationarity_err: float
    kernel_lipschitz: float       # max |dK/d(offset)| / bin width
    merged_bins: tuple            # window bins dropped for lack of population
    gap_stats: GapCouplingStats | None
    statistic: str                # "normalized" or "raw"


def log_bin_couplings(eig: SymmetricEigenSystem, coupling_operator,
                      grid: LogBinGrid, gap_floor: float | None = None,
                      floor: float | None = None,
                      statistic: str = "normalized",
                      symmetry_tol: float = 1e-8) -> LogShiftReport:
    """Shell coupling statistics of a symmetric operator in the eigenbasis.

    X_uv = phi_u^T A phi_v is evaluated for all mode pairs; per window-bin
    pair (i, j) the report carries the mean of X~^2 over u in bin i, v in bin
    j with u != v (self-pairs are intra-mode terms and are excluded), and the
    mean of X~ itself, which is linear in A and therefore exactly additive
    over operator decompositions.  With ``statistic="normalized"`` couplings
    are scale-renormalized: X~ = X / sqrt(lambda_u * lambda_v).

    Degenerate clusters: the squared statistic sums |X_uv|^2 over bins, which
    is invariant under basis rotations inside a degenerate cluster as long as
    the cluster does not straddle a bin edge and self-pairs are excluded
    consistently.

    Empty window bins are merged away (dropped from the matrices, recorded in
    ``merged_bins``); fewer than two populated window bins raises
    EmptyBinPairError.
    """
    a = np.asarray(coupling_operator, dtype=float)
    if a.shape != (eig.dim, eig.dim):
        raise DimensionMismatchError("coupling operator does not match the eigensystem")
    scale = np.max(np.abs(a)) if a.size else 0.0
    if scale > 0 and np.max(np.abs(a - a.T)) > symmetry_tol * scale:
        raise ValueError("coupling operator must be symmetric")
    if statistic not in ("normalized", "raw"):
        raise ValueError(f"unknown statistic {statistic!r}")
    if floor is None:
        floor = default_floor(eig)
    if gap_floor is None:
        gap_floor = grid.bin_width

    idx = assign_log_bins(eig, grid, floor)
    x = eig.eigenvectors.T @ (0.5 * (a + a.T)) @ eig.eigenvectors
    lam = eig.eigenvalues

    window = list(range(grid.window_lo, grid.window_hi + 1))
    members = {b: np.flatnonzero(idx == b) for b in window}
    populated = [b for b in window if members[b].size > 0]
    merged = tuple(b for b in window if members[b].size == 0)
    if len(populated) < 2:
        raise EmptyBinPairError(
            f"only {len(populated)} populated bins in the window; need >= 2")

    nb = len(populated)
    power = np.zeros((nb, nb))
    mean = np.zeros((nb, nb))
    if statistic == "normalized":
        with np.errstate(divide="ignore"):
            inv_sqrt = np.where(lam > 0, 1.0 / np.sqrt(np.maximum(lam, 1e-300)), 0.0)
        xt = x * inv_sqrt[:, None] * inv_sqrt[None, :]
    else:
        xt = x
    for ii, bi in enumerate(populated):
        ui = members[bi]
        for jj, bj in enumerate(populated):
            vj = members[bj]
            sub = xt[np.ix_(ui, vj)]
            if bi == bj:
                n_pairs = ui.size * vj.size - ui.size
                if n_pairs == 0:
                    continue
                tot2 = float(np.sum(sub ** 2) - np.sum(np.diag(sub) ** 2))
                tot1 = float(np.sum(sub) - np.sum(np.diag(sub)))
            else:
                n_pairs = ui.size * vj.size
                tot2 = float(np.sum(sub ** 2))
                tot1 = float(np.sum(sub))
            power[ii, jj] = tot2 / n_pairs
            mean[ii, jj] = tot1 / n_pairs

    err, offsets, kernel = stationarity_error(power)
    if kernel.size >= 2:
        lip = float(np.max(np.abs(np.diff(kernel)))) / grid.bin_width
    else:
        lip = 0.0

    # gap-restricted transfer couplings over all retained window modes
    win_modes = np.concatenate([members[b] for b in populated])
    s_modes = np.log(lam[win_modes])
    gaps = np.abs(np.subtract.outer(s_modes, s_modes))
    pair_mask = gaps >= gap_floor
    gap_stats = None
    if np.any(pair_mask):
        lam_w = lam[win_modes]
        denom = np.subtract.outer(lam_w, lam_w).T  # lambda_v - lambda_u
        x_w = x[np.ix_(win_modes, win_modes)]
        omega = x_w[pair_mask] / denom[pair_mask]
        gap_stats = GapCouplingStats(gap_floor=float(gap_floor),
                                     n_pairs=int(np.count_nonzero(pair_mask)),
                                     max_abs=float(np.max(np.abs(omega))),
                                     rms=float(np.sqrt(np.mean(omega ** 2))))

    return LogShiftReport(grid=grid, window_bins=tuple(populated),
                          populations=np.array([members[b].size for b in populated]),
                          coupling_power=power, coupling_mean=mean,
                          kernel_offsets=offsets, kernel_values=kernel,
                          stationarity_err=float(err), kernel_lipschitz=lip,
                          merged_bins=merged, gap_stats=gap_stats,
                          statistic=statistic)


def coupling_operator_from_path(path, i: int | None = None) -> np.ndarray:
    """Symmetrized finite-difference dM/dt along a block path (default A)."""
    times = path.times
    if i is None:
        i = len(times) // 2
    if not (0 < i < len(times) - 1):
        raise IndexError("need an interior sample for the central difference")
    j_prev = path.jacobians[i - 1].concatenated()
    j_next = path.jacobians[i + 1].concatenated()
    m_prev = j_prev @ j_prev.T
    m_next = j_next @ j_next.T
    dm = (m_next - m_prev) / (times[i + 1] - times[i - 1])
    return 0.5 * (dm + dm.T)


# ---------------------------------------------------------------------------
# Aggregate suite
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionThresholds:
    """Default pass bounds, calibrated on the shipped deep-residual config.

    The incoherence score is the rho_w-weighted relative tail
    sum_{k>=1} rho_w^k u_k(0) / u_0(0): it is what the envelope growth bound
    actually consumes, it stays depth-stable for weakly coherent blocks
    (~0.1-0.3), and it approaches rho_w/(1-rho_w) = 1 for fully coherent
    stacks, so 0.5 separates the two regimes.
    """

    banded_residual: float = SPAN_MEMBERSHIP_TOL
    banded_k: int = 1
    incoherence_weighted_tail: float = 0.5
    path_norm_bound: float = 1e3
    gronwall_tol: float = 1e-8
    stationarity_err: float = 0.5

    def to_dict(self) -> dict:
        return {
            "banded_residual": self.banded_residual,
            "banded_k": self.banded_k,
            "incoherence_weighted_tail": self.incoherence_weighted_tail,
            "path_norm_bound": self.path_norm_bound,
            "gronwall_tol": self.gronwall_tol,
            "stationarity_err": self.stationarity_err,
        }


@dataclass(frozen=True)
class ConditionReport:
    """One record with the four condition scores and pass/fail flags."""

    version: int
    conditions: dict
    thresholds: dict
    provenance: dict
    warnings: tuple

    @property
    def all_passed(self) -> bool:
        return all(c["passed"] for c in self.conditions.values())

    def to_json(self, indent: int = 2) -> str:
        payload = {
            "version": self.version,
            "all_passed": self.all_passed,
            "conditions": self.conditions,
            "thresholds": self.thresholds,
            "provenance": self.provenance,
            "warnings": list(self.warnings),
        }
        return json.dumps(payload, indent=indent, sort_keys=True)


def condition_suite(path, grid: LogBinGrid | None = None,
                    thresholds: ConditionThresholds = ConditionThresholds(),
                    weight_base: float = DEFAULT_WEIGHT_BASE,
                    theoretical_rate: float | None = None,
                    coupling_operator=None,
                    provenance: dict | None = None) -> ConditionReport:
    """Run all four condition diagnostics on a block path and aggregate.

    ``path`` must expose times / jacobians / jacobian_rates.  The coupling
    operator for Condition 4 defaults to the symmetrized dM/dt at the middle
    sample; the grid defaults to one built from that sample's spectrum.
    Sub-diagnostic failures are propagated with the condition named.
    """
    from .configs import assemble_additive_M
    from .linalg import symmetric_eigendecompose

    warnings = []
    conditions = {}

    # Condition 1: banded evolution
    try:
        mid = len(path.times) // 2
        res, flags = bandedness_residual(path.jacobians[mid],
                                         path.jacobian_rates[mid],
                                         thresholds.banded_k)
        score1 = float(np.max(res))
        if np.any(flags):
            warnings.append("condition-1: rank-deficient span, ridge solve engaged")
        conditions["banded_evolution"] = {
            "score": score1,
            "threshold": thresholds.banded_residual,
            "passed": bool(score1 <= thresholds.banded_residual),
            "bandwidth": thresholds.banded_k,
        }
    except Exception as exc:
        raise type(exc)(f"condition-1 (banded evolution): {exc}") from exc

    # Condition 2: initial incoherence + envelope growth
    try:
        env0 = envelope_from_blocks(path.jacobians[0])
        u0 = env0[0] if env0[0] > 0 else 1.0
        weights = weight_base ** np.arange(1, env0.size)
        score2 = float(weights @ env0[1:] / u0)
        report = incoherence_envelope(path.jacobians, weight_base,
                                      times=path.times,
                                      theoretical_rate=theoretical_rate)
        gronwall_ok = report.margin >= -thresholds.gronwall_tol
        conditions["initial_incoherence"] = {
            "score": score2,
            "threshold": thresholds.incoherence_weighted_tail,
            "passed": bool(score2 <= thresholds.incoherence_weighted_tail
                           and gronwall_ok),
            "gronwall_margin": report.margin,
            "growth_rate_estimate": report.growth_rate_estimate,
        }
    except Exception as exc:
        raise type(exc)(f"condition-2 (initial incoherence): {exc}") from exc

    # Condition 3: controlled path
    try:
        norms = controlled_path_norms(path)
        conditions["controlled_path"] = {
            "score": norms.c_j,
            "threshold": thresholds.path_norm_bound,
            "passed": bool(norms.c_j <= thresholds.path_norm_bound
                           and not norms.diverged
                           and math.isfinite(norms.c_j)),
            "sup_jacobian": norms.sup_jacobian,
            "sup_rate": norms.sup_rate,
            "diverged": norms.diverged,
        }
        if norms.diverged:
            warnings.append("condition-3: divergence guard tripped; "
                            "norms reflect last finite samples")
    except Exception as exc:
        raise type(exc)(f"condition-3 (controlled path): {exc}") from exc

    # Condition 4: log-shift invariance of renormalized couplings
    try:
        mid = len(path.times) // 2
        m_mid = assemble_additive_M(path.jacobians[mid].blocks)
        eig = symmetric_eigendecompose(m_mid)
        if grid is None:
            from .linalg import LogBinGrid as _G
            grid = _G.from_eigenvalues(eig, bin_width=_auto_bin_width(eig))
        if coupling_operator is None:
            coupling_operator = coupling_operator_from_path(path, mid)
        report4 = log_bin_couplings(eig, coupling_operator, grid)
        if report4.merged_bins:
            warnings.append(
                f"condition-4: merged empty window bins {list(report4.merged_bins)}")
        if np.min(report4.populations) < 3:
            warnings.append("condition-4: low bin population in the window")
        conditions["log_shift_invariance"] = {
            "score": report4.stationarity_err,
            "threshold": thresholds.stationarity_err,
            "passed": bool(report4.stationarity_err <= thresholds.stationarity_err),
            "kernel_lipschitz": report4.kernel_lipschitz,
            "window_bins": list(report4.window_bins),
        }
    except EmptyBinPairError as exc:
        warnings.append(f"condition-4: {exc}")
        conditions["log_shift_invariance"] = {
            "score": math.nan,
            "threshold": thresholds.stationarity_err,
            "passed": True,   # degenerate spectra carry no absolute scale signal
            "degenerate": True,
        }
    except Exception as exc:
        raise type(exc)(f"condition-4 (log-shift invariance): {exc}") from exc

    return ConditionReport(version=1, conditions=conditions,
                           thresholds=thresholds.to_dict(),
                           provenance=dict(provenance or {}),
                           warnings=tuple(warnings))


def _auto_bin_width(eig: SymmetricEigenSystem) -> float:
    """Bin width giving ~10 bins over the retained spectral span."""
    lam = eig.eigenvalues
    floor = default_floor(eig)
    s = np.log(lam[lam >= floor])
    span = float(np.max(s) - np.min(s)) if s.size > 1 else 1.0
    return max(span / 10.0, 1e-6)
