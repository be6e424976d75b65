import numpy as np
import pytest

from grsd.errors import AsymmetryError, EmptyWindowError, NonSquareError
from grsd.linalg import (
    LogBinGrid,
    assign_log_bins,
    bin_populations,
    default_floor,
    operator_norm,
    symmetric_eigendecompose,
)


def jacobi_eigenvalues(a, sweeps=60, tol=1e-14):
    """Independent eigensolver oracle: classical Jacobi rotations.

    Deliberately avoids np.linalg.eigh so eigendecomposition results are
    cross-checked against separately coded numerics.
    """
    m = np.array(a, dtype=float)
    n = m.shape[0]
    for _ in range(sweeps):
        off = np.sqrt(np.sum(np.tril(m, -1) ** 2))
        if off < tol * np.linalg.norm(m):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(m[p, q]) < 1e-300:
                    continue
                theta = 0.5 * np.arctan2(2 * m[p, q], m[q, q] - m[p, p])
                c, s = np.cos(theta), np.sin(theta)
                rot = np.eye(n)
                rot[p, p] = c
                rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                m = rot.T @ m @ rot
    return np.sort(np.diag(m))


class TestEigendecompose:
    def test_diagonal(self):
        eig = symmetric_eigendecompose(np.diag([1.0, 4.0, 9.0]))
        assert np.allclose(eig.eigenvalues, [1.0, 4.0, 9.0])
        # eigenvectors are a signed permutation of the standard basis
        assert np.allclose(np.abs(eig.eigenvectors), np.eye(3))

    def test_identity(self):
        eig = symmetric_eigendecompose(np.eye(5))
        assert np.allclose(eig.eigenvalues, 1.0)

    def test_against_jacobi_oracle(self):
        rng = np.random.default_rng(7)
        a = rng.standard_normal((8, 8))
        a = a + a.T
        eig = symmetric_eigendecompose(a)
        oracle = jacobi_eigenvalues(a)
        assert np.max(np.abs(eig.eigenvalues - oracle)) < 1e-8

    @pytest.mark.parametrize("n", [16, 128, 512])
    def test_reconstruction_and_orthonormality(self, n):
        rng = np.random.default_rng(n)
        a = rng.standard_normal((n, n))
        a = a + a.T
        eig = symmetric_eigendecompose(a)
        phi = eig.eigenvectors
        assert np.max(np.abs(phi.T @ phi - np.eye(n))) <= 1e-10
        err = operator_norm(eig.reconstruct() - 0.5 * (a + a.T))
        assert err <= 1e-8 * operator_norm(a)
        assert np.all(np.diff(eig.eigenvalues) >= 0)

    def test_psd_clamp(self):
        rng = np.random.default_rng(3)
        w = rng.standard_normal((6, 3))
        m = w @ w.T  # rank deficient PSD: tiny negative roundoff eigenvalues
        eig = symmetric_eigendecompose(m)
        assert np.all(eig.eigenvalues >= 0.0)

    def test_errors(self):
        with pytest.raises(NonSquareError):
            symmetric_eigendecompose(np.ones((2, 3)))
        bad = np.array([[1.0, 2.0], [0.0, 1.0]])
        with pytest.raises(AsymmetryError):
            symmetric_eigendecompose(bad, tol=1e-10)


class TestOperatorNorm:
    def test_identity(self):
        assert operator_norm(np.eye(7)) == pytest.approx(1.0)

    def test_zero(self):
        assert operator_norm(np.zeros((4, 6))) == 0.0

    def test_diagonal_abs(self):
        # singular values of a diagonal matrix are the absolute entries
        assert operator_norm(np.array([[3.0, 0.0], [0.0, -4.0]])) == pytest.approx(4.0)

    def test_gram_square_property(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            a = rng.standard_normal((9, 5))
            na = operator_norm(a)
            assert operator_norm(a.T @ a) == pytest.approx(na ** 2, rel=1e-8)


class TestLogBins:
    def test_unit_spacing(self):
        eig = symmetric_eigendecompose(np.diag([1.0, np.e, np.e ** 2]))
        grid = LogBinGrid(s_min=0.0, n_bins=3, bin_width=1.0, edge_margin=0)
        assert assign_log_bins(eig, grid, floor=1e-12).tolist() == [0, 1, 2]

    def test_boundary_joins_upper_bin(self):
        # an eigenvalue exactly on edge s_a belongs to bin a (half-open bins)
        eig = symmetric_eigendecompose(np.diag([np.exp(1.0)]))
        grid = LogBinGrid(s_min=0.0, n_bins=3, bin_width=1.0, edge_margin=0)
        assert assign_log_bins(eig, grid, floor=1e-12).tolist() == [1]

    def test_monotone(self):
        rng = np.random.default_rng(0)
        lam = np.sort(np.exp(rng.uniform(-3, 3, size=40)))
        eig = symmetric_eigendecompose(np.diag(lam))
        grid = LogBinGrid(s_min=-3.0, n_bins=12, bin_width=0.5, edge_margin=0)
        idx = assign_log_bins(eig, grid, floor=1e-12)
        kept = idx[idx >= 0]
        assert np.all(np.diff(kept) >= 0)

    def test_counts_match_multinomial_oracle(self):
        # 500 log-uniform eigenvalues over [-5, 5); each of the 20 bins is a
        # Binomial(500, 1/20) count, so all must sit within 3 sigma
        rng = np.random.default_rng(0)
        lam = np.exp(rng.uniform(-5, 5, size=500))
        eig = symmetric_eigendecompose(np.diag(np.sort(lam)))
        grid = LogBinGrid(s_min=-5.0, n_bins=20, bin_width=0.5, edge_margin=0)
        idx = assign_log_bins(eig, grid, floor=1e-300)
        counts = bin_populations(idx, grid)
        p = 1.0 / 20.0
        mean = 500 * p
        sigma = np.sqrt(500 * p * (1 - p))
        assert np.all(np.abs(counts - mean) <= 3 * sigma)
        assert counts.sum() == 500

    def test_floor_excludes_and_flags(self):
        eig = symmetric_eigendecompose(np.diag([1e-20, 1.0, np.e]))
        grid = LogBinGrid(s_min=-1.0, n_bins=4, bin_width=1.0, edge_margin=0)
        idx = assign_log_bins(eig, grid, floor=default_floor(eig))
        assert idx[0] == -1
        assert np.all(idx[1:] >= 0)

    def test_empty_window_raises(self):
        eig = symmetric_eigendecompose(np.diag([1.0]))
        # window sits entirely above the only eigenvalue
        grid = LogBinGrid(s_min=5.0, n_bins=4, bin_width=1.0, edge_margin=1)
        with pytest.raises(EmptyWindowError):
            assign_log_bins(eig, grid, floor=1e-12)

    def test_log_shift_covariance(self):
        # multiplying the spectrum by e^{k h} shifts every index by exactly k
        rng = np.random.default_rng(5)
        lam = np.exp(rng.uniform(-2, 2, size=30))
        grid = LogBinGrid(s_min=-4.0, n_bins=16, bin_width=0.5, edge_margin=0)
        k = 3
        e1 = symmetric_eigendecompose(np.diag(np.sort(lam)))
        e2 = symmetric_eigendecompose(np.diag(np.sort(lam * np.exp(k * grid.bin_width))))
        i1 = assign_log_bins(e1, grid, floor=1e-300)
        i2 = assign_log_bins(e2, grid, floor=1e-300)
        assert np.array_equal(i2, i1 + k)


class TestGrid:
    def test_partition(self):
        grid = LogBinGrid.from_bounds(-1.0, 2.0, 0.5)
        assert grid.n_bins == 6
        assert np.allclose(np.diff(grid.edges), 0.5)
        assert grid.s_max >= 2.0

    def test_window_defaults(self):
        grid = LogBinGrid(s_min=0.0, n_bins=10, bin_width=1.0)
        assert (grid.window_lo, grid.window_hi) == (2, 7)

    def test_lambda_widths(self):
        grid = LogBinGrid(s_min=0.0, n_bins=3, bin_width=1.0, edge_margin=0)
        expect = np.exp([1.0, 2.0, 3.0]) - np.exp([0.0, 1.0, 2.0])
        assert np.allclose(grid.lambda_widths, expect)


class TestMatrixCsv:
    def test_round_trip(self, tmp_path):
        from grsd.matio import load_matrix_csv, save_matrix_csv
        rng = np.random.default_rng(1)
        m = rng.standard_normal((5, 3)) * 10.0 ** rng.integers(-8, 8, size=(5, 3))
        path = tmp_path / "m.csv"
        save_matrix_csv(path, m)
        back = load_matrix_csv(path)
        assert np.array_equal(back, m)
        header = path.read_text().splitlines()[0]
        assert header == "5,3"
