import math

import numpy as np
import pytest

from grsd.configs import (
    BandedEvolution,
    BlockJacobian,
    IncoherenceProfile,
    ResidualStack,
    StableSSM,
    assemble_additive_M,
    make_incoherent_blocks,
    measured_incoherence_envelope,
    random_banded_evolution,
    residual_block_jacobian,
    residual_layer_jacobian,
    simulate_banded_evolution,
    ssm_effective_range,
    unroll_recurrence,
    unroll_ssm_jacobian,
)
from grsd.errors import (
    DimensionMismatchError,
    InfeasibleProfileError,
    UnstableSSMError,
)
from grsd.linalg import operator_norm, symmetric_eigendecompose


class TestIncoherentBlocks:
    def test_zero_profile_gives_orthogonal_blocks(self):
        bj = make_incoherent_blocks(48, [4, 4, 4, 4], IncoherenceProfile.zero(4),
                                    seed=1)
        for l in range(4):
            for m in range(l + 1, 4):
                assert operator_norm(bj.gram(l, m)) < 1e-12

    def test_geometric_profile_under_bound(self):
        profile = IncoherenceProfile.geometric(0.5, 6)  # eps_k = 2^-k
        bj = make_incoherent_blocks(64, [4] * 6, profile, seed=2)
        slack = 0.1
        for l in range(6):
            for m in range(6):
                if l == m:
                    continue
                bound = profile.value(abs(l - m)) * (1 + slack)
                assert operator_norm(bj.gram(l, m)) <= bound

    def test_measured_envelope_summable_under_profile(self):
        profile = IncoherenceProfile.geometric(0.5, 8)
        bj = make_incoherent_blocks(80, [4] * 8, profile, seed=3)
        env = measured_incoherence_envelope(bj)
        assert np.sum(env[1:]) <= profile.total * (1 + 0.1)

    def test_single_block_plain_gaussian(self):
        bj = make_incoherent_blocks(32, [6], IncoherenceProfile.zero(1), seed=4)
        assert bj.depth == 1
        assert bj.blocks[0].shape == (32, 6)

    def test_infeasible_dims(self):
        with pytest.raises(InfeasibleProfileError):
            make_incoherent_blocks(10, [4, 4, 4], IncoherenceProfile.zero(3), seed=0)


class TestResidualStack:
    def test_propagator_near_identity(self):
        stack = ResidualStack.gaussian(12, 6, 0.05, seed=9)
        for k in range(1, stack.depth + 1):
            a = stack.propagator(k)
            assert operator_norm(a - np.eye(12)) <= 0.05 * stack.g_max + 1e-12
            nrm = operator_norm(a)
            assert 1 - 0.05 * stack.g_max <= nrm <= 1 + 0.05 * stack.g_max

    def test_identity_propagators_at_zero_eps(self):
        rng = np.random.default_rng(0)
        stack = ResidualStack.gaussian(6, 4, 0.0, seed=1)
        d = rng.standard_normal((5, 6))
        b = rng.standard_normal((6, 3))
        out = residual_layer_jacobian(stack, 1, d, b)
        assert np.allclose(out, d @ b)

    def test_empty_product_for_top_blocks(self):
        rng = np.random.default_rng(1)
        stack = ResidualStack.gaussian(6, 5, 0.3, seed=2)
        d = rng.standard_normal((4, 6))
        b = rng.standard_normal((6, 2))
        # ell = L-1 and ell = L both see the empty propagator range
        assert np.allclose(residual_layer_jacobian(stack, 4, d, b), d @ b)
        assert np.allclose(residual_layer_jacobian(stack, 5, d, b), d @ b)

    def test_matches_naive_product_oracle(self):
        rng = np.random.default_rng(3)
        stack = ResidualStack.gaussian(7, 5, 0.1, seed=4)
        d = rng.standard_normal((6, 7))
        b = rng.standard_normal((7, 3))
        ell = 2
        # naive one-by-one left product over A_{L-1} ... A_{ell+1}
        prod = np.eye(7)
        for k in range(ell + 1, stack.depth):
            prod = stack.propagator(k) @ prod
        expect = d @ prod @ b
        got = residual_layer_jacobian(stack, ell, d, b)
        assert np.max(np.abs(got - expect)) < 1e-12

    def test_block_assembly_matches_per_layer(self):
        rng = np.random.default_rng(5)
        stack = ResidualStack.gaussian(6, 7, 0.2, seed=6)
        d = rng.standard_normal((9, 6))
        branches = [rng.standard_normal((6, 2)) for _ in range(7)]
        bj = residual_block_jacobian(stack, d, branches)
        for ell in range(1, 8):
            expect = residual_layer_jacobian(stack, ell, d, branches[ell - 1])
            assert np.allclose(bj.blocks[ell - 1], expect, atol=1e-13)

    def test_index_range(self):
        stack = ResidualStack.gaussian(4, 3, 0.1, seed=7)
        with pytest.raises(IndexError):
            residual_layer_jacobian(stack, 0, np.eye(4), np.eye(4))
        with pytest.raises(IndexError):
            residual_layer_jacobian(stack, 4, np.eye(4), np.eye(4))


class TestAssembleAdditive:
    def test_single_layer(self):
        rng = np.random.default_rng(0)
        j = rng.standard_normal((5, 3))
        assert np.allclose(assemble_additive_M([j]), j @ j.T)

    def test_orthogonal_ranges_give_union_spectrum(self):
        q, _ = np.linalg.qr(np.random.default_rng(1).standard_normal((8, 8)))
        j1 = q[:, :2] * np.array([2.0, 3.0])
        j2 = q[:, 2:4] * np.array([5.0, 7.0])
        m = assemble_additive_M([j1, j2])
        lam = np.sort(symmetric_eigendecompose(m).eigenvalues)[-4:]
        assert np.allclose(lam, [4.0, 9.0, 25.0, 49.0])

    def test_matches_concatenation_gram(self):
        rng = np.random.default_rng(2)
        layers = [rng.standard_normal((10, d)) for d in (3, 4, 2)]
        m = assemble_additive_M(layers)
        cat = np.hstack(layers)
        direct = cat @ cat.T
        assert np.max(np.abs(m - direct)) < 1e-10
        # nonzero spectra of the two Grams agree exactly
        lam1 = np.sort(symmetric_eigendecompose(m).eigenvalues)
        lam2 = np.sort(np.linalg.eigvalsh(cat.T @ cat))
        assert np.allclose(lam1[-lam2.size:], lam2, atol=1e-10)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            assemble_additive_M([np.ones((3, 2)), np.ones((4, 2))])


class TestStableSSM:
    def test_memoryless_blocks_decouple(self):
        ssm = StableSSM.scalar(0.0, state_dim=3, input_dim=2, output_dim=3,
                               horizon=5, seed=0)
        bj = unroll_ssm_jacobian(ssm)
        for l in range(5):
            for m in range(5):
                if l != m:
                    assert operator_norm(bj.gram(l, m)) < 1e-14

    def test_scalar_coupling_matches_geometric_oracle(self):
        rho = 0.6
        ssm = StableSSM.scalar(rho, state_dim=3, input_dim=2, output_dim=3,
                               horizon=4, seed=1)
        bj = unroll_ssm_jacobian(ssm)
        c = ssm.readout
        gram_c = operator_norm(c.T @ c)
        for l in range(4):
            for m in range(4):
                # Gram(l,m) = outer(u_l, u_m) kron (sum_t rho^{2t-l-m} C^T C)
                # over t >= max(l,m); unit inputs make the outer factor norm 1,
                # so the coupling magnitude is proportional to rho^{|l-m|}
                t0 = max(l, m)
                geom = sum(rho ** (2 * t - l - m) for t in range(t0, 4))
                expect = gram_c * geom
                got = operator_norm(bj.gram(l, m))
                assert got == pytest.approx(expect, rel=1e-10)

    def test_effective_range_tracks_formula(self):
        rho, delta = 0.99, 0.01
        ssm = StableSSM.random(state_dim=2, input_dim=1, output_dim=1,
                               horizon=540, rho=rho, seed=2)
        bj = unroll_ssm_jacobian(ssm)
        k_meas = ssm_effective_range(bj, delta)
        k_formula = math.log(1 / delta) / (1 - rho)
        assert k_formula / 2 <= k_meas <= k_formula * 2

    def test_unstable_raises(self):
        rng = np.random.default_rng(3)
        q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        mats = [1.05 * q for _ in range(40)]
        with pytest.raises(UnstableSSMError):
            StableSSM(state_matrices=tuple(mats),
                      inputs=rng.standard_normal((40, 2)),
                      readout=rng.standard_normal((2, 3)), rho=0.9)

    def test_raw_unroll_accepts_unstable(self):
        rng = np.random.default_rng(4)
        q, _ = np.linalg.qr(rng.standard_normal((2, 2)))
        mats = [1.1 * q for _ in range(6)]
        bj = unroll_recurrence(mats, rng.standard_normal((6, 2)),
                               rng.standard_normal((3, 2)))
        assert bj.depth == 6


class TestBandedEvolution:
    def test_budget_normalization(self):
        law = random_banded_evolution([3] * 8, bandwidth=2, budget=0.7, seed=5)
        assert law.coefficient_budget(8) == pytest.approx(0.7, rel=1e-12)

    def test_rate_has_bandwidth_support(self):
        law = random_banded_evolution([2] * 6, bandwidth=1, budget=1.0, seed=6)
        for (p, l) in law.coefficients:
            assert abs(p - l) <= 1

    def test_gram_ode_dual_route(self):
        # evolve blocks with the simulator, and the Gram matrices with an
        # independent integration of their own ODE; the two must agree
        rng = np.random.default_rng(7)
        dims = [3] * 5
        blocks0 = [rng.standard_normal((20, 3)) for _ in range(5)]
        init = BlockJacobian(tuple(blocks0))
        law = random_banded_evolution(dims, bandwidth=1, budget=0.6, seed=8)
        path = simulate_banded_evolution(init, law, horizon=0.5, n_steps=400,
                                         n_samples=5)

        L = 5

        def gram_rate(c):
            # Cdot_lm = sum_p B_pl^T C_pm + sum_q C_lq B_qm
            out = {}
            for l in range(L):
                for m in range(L):
                    acc = np.zeros((3, 3))
                    for (p, ll), b in law.coefficients.items():
                        if ll == l:
                            acc += b.T @ c[(p, m)]
                        if ll == m:
                            acc += c[(l, p)] @ b
                    out[(l, m)] = acc
            return out

        c = {(l, m): blocks0[l].T @ blocks0[m] for l in range(L) for m in range(L)}
        h = 0.5 / 400
        for _ in range(400):
            k1 = gram_rate(c)
            c2 = {k: c[k] + 0.5 * h * k1[k] for k in c}
            k2 = gram_rate(c2)
            c3 = {k: c[k] + 0.5 * h * k2[k] for k in c}
            k3 = gram_rate(c3)
            c4 = {k: c[k] + h * k3[k] for k in c}
            k4 = gram_rate(c4)
            c = {k: c[k] + (h / 6) * (k1[k] + 2 * k2[k] + 2 * k3[k] + k4[k])
                 for k in c}
        final = path.jacobians[-1]
        for l in range(L):
            for m in range(L):
                direct = final.gram(l, m)
                assert np.max(np.abs(direct - c[(l, m)])) < 1e-6

    def test_exact_rates_stored(self):
        rng = np.random.default_rng(9)
        init = BlockJacobian(tuple(rng.standard_normal((10, 2)) for _ in range(4)))
        law = random_banded_evolution([2] * 4, bandwidth=1, budget=0.5, seed=10)
        path = simulate_banded_evolution(init, law, horizon=0.2, n_steps=50,
                                         n_samples=3)
        for i in range(path.n_samples):
            expect = law.rate(list(path.jacobians[i].blocks))
            for l in range(4):
                assert np.allclose(path.jacobian_rates[i].blocks[l], expect[l])


class TestBlockJacobianIO:
    def test_round_trip(self, tmp_path):
        from grsd.matio import load_block_jacobian, save_block_jacobian
        rng = np.random.default_rng(11)
        blocks = [rng.standard_normal((6, d)) for d in (2, 3)]
        save_block_jacobian(tmp_path / "bj", blocks, time_stamp=1.5)
        back, t = load_block_jacobian(tmp_path / "bj")
        assert t == 1.5
        for a, b in zip(blocks, back):
            assert np.array_equal(a, b)
