"""Gradient-flow integration on small differentiable models.

The models are chosen so the Jacobian of outputs w.r.t. parameters has a
closed form; the integrator records the Jacobian trajectory J(t) needed by
the path diagnostics, and the time-rescaling check verifies that flowing
under a scaled loss alpha*L for time t matches flowing under L for time
alpha*t.

Loss convention: L(theta) = 0.5 * ||f(theta) - Y||_F^2 / normalizer with
normalizer = 1 by default, so gradient flow on plain linear regression obeys
theta(t) = theta* + expm(-X^T X t) (theta_0 - theta*).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .configs import BlockJacobian, finite_difference_rates
from .errors import (
    BoundarySampleError,
    DivergedTrajectoryError,
    NonFiniteGradientError,
)

PARAM_NORM_GUARD = 1e6

MODEL_KINDS = ("linear-regression", "two-layer-linear", "shallow-tanh")


@dataclass(frozen=True)
class ToyModel:
    """Small model with analytic parameter Jacobian and squared-error loss.

    Kinds
    -----
    linear-regression : f = X @ theta, one parameter block.
    two-layer-linear  : f = X @ W1 @ W2, blocks (vec W1, vec W2).
    shallow-tanh      : f = tanh(X @ W1) @ w2, blocks (vec W1, w2).

    ``theta`` is the flat parameter vector; ``shapes`` records how it splits
    into blocks (column-major reshape).
    """

    kind: str
    theta0: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    shapes: tuple
    normalizer: float = 1.0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        object.__setattr__(self, "theta0", np.asarray(self.theta0, dtype=float).ravel())
        object.__setattr__(self, "X", np.asarray(self.X, dtype=float))
        object.__setattr__(self, "Y", np.asarray(self.Y, dtype=float))

    # -- parameter bookkeeping ------------------------------------------

    def split(self, theta: np.ndarray) -> list:
        out = []
        pos = 0
        for shape in self.shapes:
            size = int(np.prod(shape))
            out.append(theta[pos:pos + size].reshape(shape, order="F"))
            pos += size
        return out

    # -- forward / derivatives -------------------------------------------

    def predict(self, theta: np.ndarray) -> np.ndarray:
        """Model outputs flattened to a vector (column-major over outputs)."""
        if self.kind == "linear-regression":
            (w,) = self.split(theta)
            return (self.X @ w).ravel(order="F")
        if self.kind == "two-layer-linear":
            w1, w2 = self.split(theta)
            return (self.X @ w1 @ w2).ravel(order="F")
        w1, w2 = self.split(theta)
        return np.tanh(self.X @ w1) @ w2

    def jacobian_blocks(self, theta: np.ndarray, time_stamp: float = 0.0) -> BlockJacobian:
        """Analytic d(outputs)/d(theta-block) for each block."""
        if self.kind == "linear-regression":
            return BlockJacobian((self.X.copy(),), time_stamp=time_stamp)
        if self.kind == "two-layer-linear":
            w1, w2 = self.split(theta)
            # vec(X W1 W2) = (W2^T kron X) vec(W1) = (I_p kron X W1) vec(W2)
            j1 = np.kron(w2.T, self.X)
            j2 = np.kron(np.eye(w2.shape[1]), self.X @ w1)
            return BlockJacobian((j1, j2), time_stamp=time_stamp)
        w1, w2 = self.split(theta)
        z = self.X @ w1
        h = np.tanh(z)
        dh = 1.0 - h * h
        n_samp, d_in = self.X.shape
        r = w1.shape[1]
        # d f_i / d (W1)_{ab} = w2_b * (1 - tanh^2 z_{ib}) * X_{ia}
        j1 = (dh[:, None, :] * self.X[:, :, None] * w2[None, None, :]
              ).reshape(n_samp, d_in * r, order="F")
        return BlockJacobian((j1, h.copy()), time_stamp=time_stamp)

    def residual(self, theta: np.ndarray) -> np.ndarray:
        return self.predict(theta) - self.Y.ravel(order="F")

    def loss(self, theta: np.ndarray) -> float:
        r = self.residual(theta)
        return 0.5 * float(r @ r) / self.normalizer

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        j = self.jacobian_blocks(theta).concatenated()
        return (j.T @ self.residual(theta)) / self.normalizer

    # -- factories ---------------------------------------------------------

    @classmethod
    def linear_regression(cls, n_samples: int = 16, dim: int = 4,
                          seed: int = 0) -> "ToyModel":
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((n_samples, dim)) / math.sqrt(n_samples)
        w_true = rng.standard_normal(dim)
        y = x @ w_true + 0.05 * rng.standard_normal(n_samples)
        theta0 = rng.standard_normal(dim)
        return cls("linear-regression", theta0, x, y, shapes=((dim, 1),))

    @classmethod
    def quadratic(cls, theta0) -> "ToyModel":
        """Pure quadratic loss 0.5*||theta||^2 (X = I, Y = 0)."""
        theta0 = np.asarray(theta0, dtype=float)
        d = theta0.size
        return cls("linear-regression", theta0, np.eye(d), np.zeros(d),
                   shapes=((d, 1),))

    @classmethod
    def two_layer_linear(cls, n_samples: int = 12, d_in: int = 4, rank: int = 3,
                         d_out: int = 2, seed: int = 1) -> "ToyModel":
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((n_samples, d_in)) / math.sqrt(n_samples)
        y = rng.standard_normal((n_samples, d_out)) * 0.5
        w1 = rng.standard_normal((d_in, rank)) / math.sqrt(d_in)
        w2 = rng.standard_normal((rank, d_out)) / math.sqrt(rank)
        theta0 = np.concatenate([w1.ravel(order="F"), w2.ravel(order="F")])
        return cls("two-layer-linear", theta0, x, y,
                   shapes=((d_in, rank), (rank, d_out)))

    @classmethod
    def shallow_tanh(cls, n_samples: int = 14, d_in: int = 3, width: int = 4,
                     seed: int = 2) -> "ToyModel":
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((n_samples, d_in))
        y = rng.standard_normal(n_samples) * 0.5
        w1 = rng.standard_normal((d_in, width)) / math.sqrt(d_in)
        w2 = rng.standard_normal(width) / math.sqrt(width)
        theta0 = np.concatenate([w1.ravel(order="F"), w2])
        return cls("shallow-tanh", theta0, x, y, shapes=((d_in, width), (width,)))


def default_models() -> dict:
    """The three shipped toy models keyed by kind."""
    return {
        "linear-regression": ToyModel.linear_regression(),
        "two-layer-linear": ToyModel.two_layer_linear(),
        "shallow-tanh": ToyModel.shallow_tanh(),
    }


@dataclass(frozen=True)
class Trajectory:
    """Sampled gradient-flow path with Jacobians and their rates."""

    times: np.ndarray
    states: np.ndarray          # (M+1, dim)
    losses: np.ndarray
    jacobians: tuple = ()       # BlockJacobian per sample (may be empty)
    jacobian_rates: tuple = ()
    diverged: bool = False

    @property
    def n_samples(self) -> int:
        return len(self.times)

    def operator_norms(self) -> tuple:
        """(sup ||J||_op, sup ||Jdot||_op) over stored samples."""
        from .linalg import operator_norm
        nj = max(operator_norm(b.concatenated()) for b in self.jacobians)
        nr = max(operator_norm(b.concatenated()) for b in self.jacobian_rates)
        return nj, nr


def _rk4_step(grad, theta: np.ndarray, h: float) -> np.ndarray:
    k1 = grad(theta)
    k2 = grad(theta - 0.5 * h * k1)
    k3 = grad(theta - 0.5 * h * k2)
    k4 = grad(theta - h * k3)
    return theta - (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _euler_step(grad, theta: np.ndarray, h: float) -> np.ndarray:
    return theta - h * grad(theta)


def integrate_gradient_flow(model: ToyModel, horizon: float, step: float = 1e-3,
                            method: str = "rk4", record_every: int = 10,
                            record_jacobians: bool = True,
                            loss_scale: float = 1.0,
                            on_divergence: str = "truncate") -> Trajectory:
    """Integrate theta' = -loss_scale * grad L(theta) over [0, horizon].

    Fixed-step rk4 (local truncation O(h^5)) or explicit Euler.  Samples are
    recorded every ``record_every`` steps (plus the final state).  A guard
    aborts when ||theta|| exceeds 1e6; by default the trajectory returned so
    far is flagged ``diverged`` rather than raising, so that a Condition-3
    violation surfaces as a detectable event.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if horizon < step:
        raise ValueError("horizon must be at least one step")
    if method not in ("rk4", "euler"):
        raise ValueError(f"unknown method {method!r}")
    stepper = _rk4_step if method == "rk4" else _euler_step

    def grad(theta):
        g = model.gradient(theta)
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError("gradient has non-finite entries")
        return loss_scale * g

    n_steps = int(round(horizon / step))
    theta = model.theta0.copy()
    times = [0.0]
    states = [theta.copy()]
    losses = [loss_scale * model.loss(theta)]
    diverged = False
    for i in range(1, n_steps + 1):
        theta = stepper(grad, theta, step)
        if np.linalg.norm(theta) > PARAM_NORM_GUARD:
            if on_divergence == "raise":
                raise DivergedTrajectoryError(f"||theta|| > {PARAM_NORM_GUARD:g} at t={i * step:g}")
            diverged = True
            break
        if i % record_every == 0 or i == n_steps:
            times.append(i * step)
            states.append(theta.copy())
            losses.append(loss_scale * model.loss(theta))

    times = np.array(times)
    states = np.array(states)
    losses = np.array(losses)
    jacobians = ()
    rates = ()
    if record_jacobians and len(times) >= 3:
        jacobians = tuple(model.jacobian_blocks(states[i], time_stamp=float(times[i]))
                          for i in range(len(times)))
        rates = finite_difference_rates(times, jacobians)
    return Trajectory(times=times, states=states, losses=losses,
                      jacobians=jacobians, jacobian_rates=rates,
                      diverged=diverged)


def jacobian_rate(trajectory: Trajectory, i: int) -> np.ndarray:
    """Central-difference dJ/dt at interior sample ``i`` (concatenated form).

    Second-order accurate in the sample spacing; endpoints raise since the
    central stencil needs both neighbors.
    """
    m = trajectory.n_samples - 1
    if not (0 < i < m):
        raise BoundarySampleError(f"sample {i} is not interior (0 < i < {m})")
    ja = trajectory.jacobians[i - 1].concatenated()
    jb = trajectory.jacobians[i + 1].concatenated()
    dt = trajectory.times[i + 1] - trajectory.times[i - 1]
    return (jb - ja) / dt


def _hermite_eval(t: float, t0: float, t1: float, y0, y1, d0, d1):
    """Cubic Hermite interpolation on [t0, t1] (error O(h^4))."""
    h = t1 - t0
    s = (t - t0) / h
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    return h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1


def check_time_rescaling_covariance(model: ToyModel, alpha: float,
                                    horizon: float, step: float = 1e-3,
                                    method: str = "rk4") -> float:
    """max_i ||theta_alpha(t_i) - theta(alpha t_i)|| over the sample grid.

    ``theta_alpha`` flows under the scaled loss alpha*L on [0, horizon];
    the reference flow runs under L on [0, alpha*horizon] with the same step.
    Reference states at alpha*t_i are taken from the grid when alpha*t_i
    lands on a node and by cubic Hermite interpolation otherwise, so the
    reported deviation is pure integrator/interpolation error: O(step^4)
    for rk4 and exactly zero at alpha = 1.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    scaled = integrate_gradient_flow(model, horizon, step=step, method=method,
                                     record_every=1, record_jacobians=False,
                                     loss_scale=alpha, on_divergence="raise")
    base = integrate_gradient_flow(model, alpha * horizon, step=step, method=method,
                                   record_every=1, record_jacobians=False,
                                   loss_scale=1.0, on_divergence="raise")
    worst = 0.0
    for i, t in enumerate(scaled.times):
        target = alpha * t
        pos = target / step
        k = int(round(pos))
        if abs(pos - k) < 1e-9 and 0 <= k < base.n_samples:
            ref = base.states[k]
        else:
            k0 = min(int(math.floor(pos)), base.n_samples - 2)
            t0, t1 = base.times[k0], base.times[k0 + 1]
            y0, y1 = base.states[k0], base.states[k0 + 1]
            d0 = -model.gradient(y0)
            d1 = -model.gradient(y1)
            ref = _hermite_eval(target, t0, t1, y0, y1, d0, d1)
        dev = float(np.linalg.norm(scaled.states[i] - ref))
        worst = max(worst, dev)
    return worst


def trajectory_summary_rows(trajectory: Trajectory) -> list:
    """(t, loss, ||J||_op, ||Jdot||_op) rows for CSV export."""
    from .linalg import operator_norm
    rows = []
    for i, t in enumerate(trajectory.times):
        nj = operator_norm(trajectory.jacobians[i].concatenated()) if trajectory.jacobians else float("nan")
        nr = operator_norm(trajectory.jacobian_rates[i].concatenated()) if trajectory.jacobian_rates else float("nan")
        rows.append((float(t), float(trajectory.losses[i]), nj, nr))
    return rows
