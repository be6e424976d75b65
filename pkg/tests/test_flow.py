import numpy as np
import pytest
from scipy.linalg import expm

from grsd.errors import BoundarySampleError, DivergedTrajectoryError
from grsd.flow import (
    ToyModel,
    Trajectory,
    check_time_rescaling_covariance,
    default_models,
    integrate_gradient_flow,
    jacobian_rate,
)
from grsd.configs import BlockJacobian


class TestModels:
    @pytest.mark.parametrize("name", ["linear-regression", "two-layer-linear",
                                      "shallow-tanh"])
    def test_analytic_jacobian_matches_finite_differences(self, name):
        model = default_models()[name]
        theta = model.theta0
        j = model.jacobian_blocks(theta).concatenated()
        eps = 1e-6
        num = np.zeros_like(j)
        for k in range(theta.size):
            up = theta.copy()
            up[k] += eps
            dn = theta.copy()
            dn[k] -= eps
            num[:, k] = (model.predict(up) - model.predict(dn)) / (2 * eps)
        assert np.max(np.abs(j - num)) < 1e-7

    def test_gradient_is_jacobian_transpose_residual(self):
        model = default_models()["shallow-tanh"]
        j = model.jacobian_blocks(model.theta0).concatenated()
        expect = j.T @ model.residual(model.theta0)
        assert np.allclose(model.gradient(model.theta0), expect)


class TestIntegration:
    def test_quadratic_decay(self):
        # loss 0.5*||theta||^2: flow is exact exponential decay
        model = ToyModel.quadratic([1.0, 0.0])
        traj = integrate_gradient_flow(model, horizon=1.0, step=1e-3,
                                       record_every=1000)
        assert np.allclose(traj.states[-1], [np.exp(-1.0), 0.0], atol=1e-6)

    def test_stationary_point(self):
        model = ToyModel.quadratic([0.0, 0.0])
        traj = integrate_gradient_flow(model, horizon=0.5, step=1e-2)
        assert np.all(traj.states == 0.0)

    def test_linear_regression_matches_matrix_exponential_oracle(self):
        model = ToyModel.linear_regression(n_samples=12, dim=4, seed=5)
        x, y = model.X, model.Y
        gram = x.T @ x
        theta_star = np.linalg.solve(gram, x.T @ y)
        t_end = 2.0
        expect = theta_star + expm(-gram * t_end) @ (model.theta0 - theta_star)
        traj = integrate_gradient_flow(model, horizon=t_end, step=1e-3,
                                       record_every=100, record_jacobians=False)
        assert np.max(np.abs(traj.states[-1] - expect)) < 1e-6

    def test_loss_nonincreasing(self):
        for model in default_models().values():
            traj = integrate_gradient_flow(model, horizon=1.0, step=1e-3,
                                           record_every=50,
                                           record_jacobians=False)
            assert np.all(np.diff(traj.losses) <= 1e-12)

    def test_divergence_guard_flags(self):
        # gradient ascent on the quadratic blows up; guard must truncate
        model = ToyModel.quadratic([1.0])
        traj = integrate_gradient_flow(model, horizon=40.0, step=0.1,
                                       loss_scale=-1.0)
        assert traj.diverged
        assert np.all(np.isfinite(traj.states))
        with pytest.raises(DivergedTrajectoryError):
            integrate_gradient_flow(model, horizon=40.0, step=0.1,
                                    loss_scale=-1.0, on_divergence="raise")

    def test_c_j_finite_on_shipped_models(self):
        from grsd.conditions import controlled_path_norms
        for model in default_models().values():
            traj = integrate_gradient_flow(model, horizon=1.0, step=1e-2,
                                           record_every=10)
            report = controlled_path_norms(traj)
            assert np.isfinite(report.c_j)
            assert not report.diverged


class TestTimeRescaling:
    def test_alpha_one_is_exact(self):
        for model in default_models().values():
            dev = check_time_rescaling_covariance(model, 1.0, horizon=0.5)
            assert dev == 0.0

    def test_quadratic_alpha_two_analytic(self):
        # theta_alpha(t) = theta0 e^{-2t} must equal theta(2t)
        model = ToyModel.quadratic([1.0, -0.5])
        dev = check_time_rescaling_covariance(model, 2.0, horizon=1.0, step=1e-3)
        assert dev <= 1e-6
        traj = integrate_gradient_flow(model, horizon=1.0, step=1e-3,
                                       loss_scale=2.0, record_every=1000,
                                       record_jacobians=False)
        assert np.allclose(traj.states[-1], model.theta0 * np.exp(-2.0), atol=1e-6)

    def test_shallow_tanh_alpha_three(self):
        model = default_models()["shallow-tanh"]
        dev = check_time_rescaling_covariance(model, 3.0, horizon=1.0, step=1e-3)
        assert dev <= 1e-5

    def test_rk4_order_under_refinement(self):
        # non-grid-aligned alpha so interpolation/truncation error is live
        model = default_models()["shallow-tanh"]
        d1 = check_time_rescaling_covariance(model, 1.7, horizon=1.0, step=4e-3)
        d2 = check_time_rescaling_covariance(model, 1.7, horizon=1.0, step=2e-3)
        assert d1 > 0 and d2 > 0
        ratio = d1 / d2
        assert 8 <= ratio <= 32  # O(h^4) contract: nominal ratio 16

    def test_alpha_must_be_positive(self):
        with pytest.raises(ValueError):
            check_time_rescaling_covariance(ToyModel.quadratic([1.0]), 0.0, 1.0)


class TestJacobianRate:
    def _traj_from_blocks(self, times, mats):
        bjs = tuple(BlockJacobian((m,), time_stamp=t) for t, m in zip(times, mats))
        from grsd.configs import finite_difference_rates
        rates = finite_difference_rates(np.asarray(times), bjs)
        return Trajectory(times=np.asarray(times), states=np.zeros((len(times), 1)),
                          losses=np.zeros(len(times)), jacobians=bjs,
                          jacobian_rates=rates)

    def test_constant_gives_zero(self):
        j = np.ones((3, 2))
        traj = self._traj_from_blocks([0.0, 0.1, 0.2], [j, j, j])
        assert np.all(jacobian_rate(traj, 1) == 0.0)

    def test_linear_exact(self):
        j1 = np.arange(6.0).reshape(3, 2)
        times = [0.0, 0.5, 1.0]
        traj = self._traj_from_blocks(times, [t * j1 for t in times])
        assert np.allclose(jacobian_rate(traj, 1), j1, atol=1e-14)

    def test_sine_within_taylor_bound(self):
        j1 = np.random.default_rng(0).standard_normal((4, 3))
        h = 1e-3
        times = [-h, 0.0, h]
        traj = self._traj_from_blocks(times, [np.sin(t) * j1 for t in times])
        got = jacobian_rate(traj, 1)
        # derivative of sin at 0 is 1; central difference error h^2/6
        rel = np.max(np.abs(got - j1)) / np.max(np.abs(j1))
        assert rel < 1e-6

    def test_boundary_raises(self):
        j = np.ones((2, 2))
        traj = self._traj_from_blocks([0.0, 0.1, 0.2], [j, j, j])
        with pytest.raises(BoundarySampleError):
            jacobian_rate(traj, 0)
        with pytest.raises(BoundarySampleError):
            jacobian_rate(traj, 2)


class TestExport:
    def test_summary_rows(self):
        from grsd.flow import trajectory_summary_rows
        model = ToyModel.linear_regression()
        traj = integrate_gradient_flow(model, horizon=0.2, step=1e-2,
                                       record_every=5)
        rows = trajectory_summary_rows(traj)
        assert len(rows) == traj.n_samples
        t, loss, nj, nr = rows[0]
        assert t == 0.0 and loss > 0 and nj > 0 and np.isfinite(nr)
