import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from conftest import smooth_bump
from crossdiff import fem, model
from crossdiff.errors import FixedPointStalled, HypothesisViolated
from crossdiff.image import psnr


def tensor_q1(n):
    """Q1 stiffness and lumped mass on an n x n unit grid from 1D tensor factors."""
    k1 = 2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
    k1[0, 0] = k1[-1, -1] = 1
    m1 = (4 * np.eye(n) + np.eye(n, k=1) + np.eye(n, k=-1)) / 6
    m1[0, 0] = m1[-1, -1] = 1 / 3
    lump = np.ones(n)
    lump[[0, -1]] = 0.5
    return np.kron(m1, k1) + np.kron(k1, m1), np.kron(lump, lump)


class TestDetector:
    @pytest.mark.parametrize("kind", ["exponential", "rational"])
    def test_values(self, kind):
        g = model.EdgeDetector(kind, 2.0)
        assert g(0.0) == 1.0
        expect = math.exp(-1) if kind == "exponential" else 0.5
        assert float(g(2.0)) == pytest.approx(expect, rel=1e-15)

    @given(st.sampled_from(["exponential", "rational"]), st.floats(1e-3, 1e3), st.floats(0, 1e6), st.floats(0, 1e6))
    def test_positive_and_nonincreasing(self, kind, lam, s, t):
        g = model.EdgeDetector(kind, lam)
        lo, hi = sorted((s, t))
        assert 0 < g(hi) <= g(lo) <= 1

    def test_floor_prevents_underflow(self):
        assert model.EdgeDetector("exponential", 1.0)(1e5) > 0

    def test_constant(self):
        g = model.EdgeDetector.constant(3.0)
        np.testing.assert_array_equal(g(np.arange(4.0)), 3.0)
        assert g.max_value == 3.0

    def test_validation(self):
        with pytest.raises(ValueError):
            model.EdgeDetector("gaussian")
        with pytest.raises(ValueError):
            model.EdgeDetector("exponential", 0.0)


class TestHypothesisCheck:
    def test_identity(self):
        assert model.check_hypothesis(model.DiffusionMatrix(1, 0, 0, 1)) == 1.0

    def test_default_rotation(self):
        a0 = model.check_hypothesis(model.DiffusionMatrix.rotation(math.pi / 30))
        assert a0 == pytest.approx(0.9945218953682733, rel=1e-14)

    def test_quarter_turn_fails_dominance(self):
        with pytest.raises(HypothesisViolated) as e:
            model.check_hypothesis(model.DiffusionMatrix.rotation(math.pi / 2))
        assert e.value.clause == "dominance"

    def test_symmetric_indefinite(self):
        with pytest.raises(HypothesisViolated) as e:
            model.check_hypothesis(model.DiffusionMatrix(1, 2, 2, 1))
        assert e.value.clause == "dominance"

    def test_coercivity_clause(self):
        # diagonal dominance holds column-wise, symmetric part has determinant < 0
        with pytest.raises(HypothesisViolated) as e:
            model.check_hypothesis(model.DiffusionMatrix(10, 0.09, 9, 0.1))
        assert e.value.clause == "coercivity"

    @given(st.floats(0, math.pi / 2))
    def test_rotation_accepted_iff_below_quarter_pi(self, theta):
        assume(abs(theta - math.pi / 4) > 1e-9)
        A = model.DiffusionMatrix.rotation(theta)
        if theta < math.pi / 4:
            assert model.check_hypothesis(A) == pytest.approx(math.cos(theta), rel=1e-12)
        else:
            with pytest.raises(HypothesisViolated):
                model.check_hypothesis(A)

    def test_alphas(self):
        A = model.DiffusionMatrix(2, 0.5, -0.4, 4)
        assert A.alpha12 == 0.125 and A.alpha21 == -0.2


def _state(u1, u2=None):
    u1 = np.asarray(u1, float).reshape(-1)
    return model.CdState(u1, np.zeros_like(u1) if u2 is None else np.asarray(u2, float).reshape(-1))


class TestStep:
    def test_constant_state_is_fixed(self):
        grid = fem.build_grid(6, 5)
        s = _state(np.full(30, 17.0))
        out = model.qss_step(s, s.u1, s.u2, model.CdConfig(), grid)
        assert out.fp_iterations_last == 1 and out.converged
        np.testing.assert_allclose(out.u1, 17.0, rtol=1e-12)
        np.testing.assert_allclose(out.u2, 0.0, atol=1e-12)

    def test_heat_equation_oracle(self, rng):
        n, tau = 8, 0.05
        u0 = rng.uniform(0, 10, n * n)
        K, m = tensor_q1(n)
        expect = np.linalg.solve(np.diag(m / tau) + K, m * u0 / tau)
        cfg = model.CdConfig(tau=tau, theta=0.0, detector=model.EdgeDetector.constant(1.0))
        out = model.qss_step(_state(u0), u0, 0 * u0, cfg, fem.build_grid(n, n))
        assert np.max(np.abs(out.u1 - expect)) <= 1e-8
        assert np.max(np.abs(out.u2)) <= 1e-12

    def test_zero_angle_decouples(self, rng):
        n = 10
        grid = fem.build_grid(n, n)
        u0 = rng.uniform(0, 50, n * n)
        cfg = model.CdConfig(theta=0.0, tau=0.02)
        out = model.qss_step(_state(u0), u0, 0 * u0, cfg, grid)
        np.testing.assert_array_equal(out.u2, 0.0)

    def test_strong_fidelity_pins_to_data(self, rng):
        grid = fem.build_grid(8, 8)
        u0 = rng.uniform(0, 1, 64)
        start = _state(rng.uniform(0, 1, 64))
        cfg = model.CdConfig(tau=1.0, beta1=1e8, beta2=1e8)
        out = model.qss_step(start, u0, 0 * u0, cfg, grid)
        assert np.max(np.abs(out.u1 - u0)) < 1e-3
        assert np.max(np.abs(out.u2)) < 1e-3

    def test_stall_policies(self, rng):
        grid = fem.build_grid(12, 12)
        u0 = 100 * rng.uniform(0, 1, 144)
        base = dict(tau=0.5, fp_tol=1e-14, max_fp_iter=2, detector=model.EdgeDetector("exponential", 0.01))
        out = model.qss_step(_state(u0), u0, 0 * u0, model.CdConfig(**base), grid)
        assert not out.converged and out.fp_iterations_last == 2
        with pytest.raises(FixedPointStalled) as e:
            model.qss_step(_state(u0), u0, 0 * u0, model.CdConfig(on_stall="raise", **base), grid)
        assert e.value.state is not None and e.value.state.fp_iterations_last == 2

    def test_rejects_bad_angle(self):
        grid = fem.build_grid(3, 3)
        s = _state(np.arange(9.0))
        with pytest.raises(HypothesisViolated):
            model.qss_step(s, s.u1, s.u2, model.CdConfig(theta=math.pi / 3), grid)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0, 0.7), st.floats(1e-3, 0.5))
    def test_mass_and_energy(self, seed, theta, tau):
        rng = np.random.default_rng(seed)
        grid = fem.build_grid(7, 6)
        mass = fem.lumped_mass(grid)
        u0 = rng.uniform(0, 255, 42)
        cfg = model.CdConfig(tau=tau, theta=theta, detector=model.EdgeDetector("exponential", 5.0))
        before = _state(u0)
        after = model.qss_step(before, u0, 0 * u0, cfg, grid)
        assert model.mass_drift(mass, before, after) <= 1e-10
        e0 = model.lumped_energy(mass, before.u1, before.u2)
        assert model.lumped_energy(mass, after.u1, after.u2) <= e0 * (1 + 1e-10)


class TestDenoise:
    def test_zero_time_is_identity(self, rng):
        img = rng.uniform(0, 255, (9, 7))
        res = model.denoise_cd(img, model.CdConfig(t_final=0.0))
        np.testing.assert_array_equal(res.denoised, img)
        assert res.records == []

    def test_constant_image(self):
        res = model.denoise_cd(np.full((10, 12), 80.0), model.CdConfig(t_final=0.05))
        np.testing.assert_allclose(res.denoised, 80.0, rtol=1e-12)
        assert res.fp_iterations == [1] * 5

    def test_step_count(self):
        assert model.CdConfig(tau=0.01, t_final=0.2).n_steps == 20
        assert model.CdConfig(tau=0.03, t_final=0.1).n_steps == 4

    def test_records_and_callback(self, rng):
        seen = []
        res = model.denoise_cd(rng.uniform(0, 255, (8, 8)), model.CdConfig(t_final=0.03), lambda s, r: seen.append(r))
        assert [r.step for r in res.records] == [1, 2, 3]
        assert seen == res.records
        assert all(r.mass_drift < 1e-10 for r in res.records)
        energies = [r.energy for r in res.records]
        assert all(b <= a * (1 + 1e-12) for a, b in zip(energies, energies[1:]))

    def test_improves_noisy_shapes(self, shapes128):
        from crossdiff.image import NoiseSpec, add_gaussian_noise

        noisy = add_gaussian_noise(shapes128, NoiseSpec(10, 3))
        res = model.denoise_cd(noisy, model.CdConfig(t_final=0.1))
        assert psnr(shapes128, res.denoised) > psnr(shapes128, noisy) + 1.0

    def test_rescale(self):
        np.testing.assert_array_equal(model.rescale_for_display(np.array([1.0, 3.0, 2.0])), [0, 255, 127.5])
        np.testing.assert_array_equal(model.rescale_for_display(np.full(3, 4.0)), 0)


class TestSteady:
    def test_constant_data(self):
        grid = fem.build_grid(5, 5)
        prob = model.SteadyProblem(2.0, 4.0, np.full(25, 6.0), np.full(25, -8.0))
        res = model.solve_steady(prob, model.DiffusionMatrix.rotation(0.2), model.EdgeDetector(), grid)
        np.testing.assert_allclose(res.state.u1, 3.0, rtol=1e-12)
        np.testing.assert_allclose(res.state.u2, -2.0, rtol=1e-12)
        assert res.state.converged and res.bound_holds

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0, 0.7), st.floats(0.2, 5), st.floats(0.2, 5))
    def test_sup_norm_estimate(self, seed, theta, g1, g2):
        rng = np.random.default_rng(seed)
        grid = fem.build_grid(10, 10)
        prob = model.SteadyProblem(g1, g2, rng.uniform(-1, 1, 100), rng.uniform(-1, 1, 100))
        res = model.solve_steady(prob, model.DiffusionMatrix.rotation(theta), model.EdgeDetector("exponential", 1.0), grid)
        assert res.state.converged
        assert res.linf_lhs <= 1.05 * res.linf_rhs

    def test_bound_on_unconverged_iterate(self):
        # detector scale far below the data range: the lagged iteration cycles
        # without settling, yet every iterate still satisfies the estimate
        rng = np.random.default_rng(0)
        grid = fem.build_grid(32, 32)
        prob = model.SteadyProblem(1.0, 1.0, rng.uniform(-1, 1, 1024), rng.uniform(-1, 1, 1024))
        res = model.solve_steady(prob, model.DiffusionMatrix.rotation(math.pi / 30), model.EdgeDetector("exponential", 0.15), grid, max_fp_iter=30)
        assert res.bound_holds
        with pytest.raises(FixedPointStalled):
            model.solve_steady(
                prob, model.DiffusionMatrix.rotation(math.pi / 30), model.EdgeDetector("exponential", 0.15), grid, max_fp_iter=30, on_stall="raise"
            )

    def test_hypothesis_enforced(self):
        grid = fem.build_grid(3, 3)
        prob = model.SteadyProblem(1, 1, np.zeros(9), np.zeros(9))
        with pytest.raises(HypothesisViolated):
            model.solve_steady(prob, model.DiffusionMatrix(1, 2, 2, 1), model.EdgeDetector(), grid)

    def test_problem_validation(self):
        with pytest.raises(ValueError):
            model.SteadyProblem(0, 1, np.zeros(4), np.zeros(4))


class TestConsistency:
    def test_lumped_laplacian_of_quadratic(self):
        # interior nodes see the five-point stencil scaled by the tensor structure: exact for x^2
        grid = fem.build_grid(6, 6)
        yy, xx = np.mgrid[0:6, 0:6].astype(float)
        lap = model.lumped_laplacian(grid, (xx**2).reshape(-1)).reshape(6, 6)
        np.testing.assert_allclose(lap[1:-1, 1:-1], 2.0, rtol=1e-12)

    def test_gap_is_first_order(self):
        n = 24
        grid = fem.build_grid(n, n)
        u = smooth_bump(n).reshape(-1)
        gaps = [model.small_time_consistency(u, math.pi / 30, tau, grid) for tau in (0.01, 0.005, 0.0025)]
        assert gaps[0] <= 0.05
        for a, b in zip(gaps, gaps[1:]):
            assert 1.5 <= a / b <= 2.5

    def test_zero_data_gap_is_zero(self):
        assert model.small_time_consistency(np.zeros(16), 0.1, 0.01, fem.build_grid(4, 4)) == 0.0
