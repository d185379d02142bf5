import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualgate.errors import ContractViolationError, InsufficientDataError
from dualgate.models import (
    drag_quadrotor,
    dynamics_rate,
    eval_dynamics,
    integrate_step,
    make_regression_tuple,
    simulate_closed_loop,
    vector_drag_quadrotor,
)

HOVER = np.array([0.0, 0.0, 9.81])


def _hover_policy(t, x):
    return HOVER


class TestEvalDynamics:
    def test_zero_velocity_drag_vanishes(self, quad):
        x = np.array([1.0, 2.0, 1.0, 0, 0, 0])
        rate = eval_dynamics(quad, x, HOVER, np.array([0.7]), np.zeros(6))
        assert np.allclose(rate, 0.0)

    def test_drag_term_hand_evaluated(self, quad):
        # rdot = (1,0,0), cd = 0.3: drag contributes -0.3*|v|*v = (-0.3,0,0)
        x = np.array([0, 0, 1.0, 1.0, 0, 0])
        rate = eval_dynamics(quad, x, np.zeros(3), np.array([0.3]), np.zeros(6))
        assert np.allclose(rate[3:], np.array([-0.3, 0.0, -9.81]))

    def test_theta_zero_gives_nominal(self, quad):
        rng = np.random.default_rng(0)
        x = rng.normal(size=6)
        u = rng.normal(size=3)
        rate = eval_dynamics(quad, x, u, np.array([0.0]), np.zeros(6))
        nominal = quad.f0(x) + quad.g0(x) @ u
        assert np.allclose(rate, nominal)

    def test_dimension_mismatch_raises(self, quad):
        with pytest.raises(ContractViolationError):
            eval_dynamics(quad, np.zeros(5), np.zeros(3), np.zeros(1), np.zeros(6))
        with pytest.raises(ContractViolationError):
            eval_dynamics(quad, np.zeros(6), np.zeros(3), np.zeros(2), np.zeros(6))

    def test_fused_rate_matches_components(self, quad, vquad, car):
        rng = np.random.default_rng(3)
        for model in (quad, vquad, car):
            x = rng.normal(size=(40, model.state_dim))
            u = rng.uniform(model.input_bounds.lo, model.input_bounds.hi,
                            (40, model.input_dim))
            th = rng.uniform(0.1, 0.9, (40, model.param_dim))
            fused = model.rate(x, u, th, 0.0)
            parts = (model.f0(x)
                     + np.einsum("bnp,bp->bn", model.regressor(x, u), th)
                     + np.einsum("bnm,bm->bn", model.g0(x), u))
            assert np.allclose(fused, parts, atol=1e-12)


class TestLIPConsistency:
    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_regressor_matches_dynamics_difference(self, seed):
        rng = np.random.default_rng(seed)
        for model in (drag_quadrotor(), vector_drag_quadrotor()):
            x = rng.normal(scale=2.0, size=model.state_dim)
            u = rng.uniform(model.input_bounds.lo, model.input_bounds.hi)
            theta = rng.uniform(0, 1, model.param_dim)
            with_theta = eval_dynamics(model, x, u, theta, np.zeros(model.state_dim))
            without = eval_dynamics(model, x, u, np.zeros(model.param_dim),
                                    np.zeros(model.state_dim))
            phi = model.regressor(x, u)
            assert np.allclose(with_theta - without, phi @ theta, atol=1e-10)


class TestIntegrateStep:
    def test_exponential_decay_closed_form(self, decay_model):
        x1 = integrate_step(decay_model, np.array([1.0]), np.array([0.0]),
                            np.array([0.0]), np.array([0.0]), 0.1)
        assert abs(x1[0] - np.exp(-0.1)) < 1e-6

    def test_rk4_fourth_order_slope(self, quad):
        # Global error over a fixed 1 s span scales ~dt^4.
        x0 = np.array([0, 0, 1.0, 2.0, 1.0, 0.5])
        u = np.array([0.5, -0.3, 9.0])
        theta = quad.true_theta

        def endpoint(dt):
            x = x0.copy()
            for _ in range(int(round(1.0 / dt))):
                x = integrate_step(quad, x, u, theta, np.zeros(6), dt)
            return x

        ref = endpoint(0.00125)
        dts = np.array([0.05, 0.025, 0.0125])
        errs = np.array([np.linalg.norm(endpoint(dt) - ref) for dt in dts])
        slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
        assert 3.7 <= slope <= 4.3

    def test_halving_dt_shrinks_error_16x(self, quad):
        x0 = np.array([0, 0, 1.0, 2.0, 0.0, 0.0])
        u = np.array([1.0, 0.5, 9.81])

        def endpoint(dt):
            x = x0.copy()
            for _ in range(int(round(0.8 / dt))):
                x = integrate_step(quad, x, u, quad.true_theta, np.zeros(6), dt)
            return x

        ref = endpoint(0.0005)
        e1 = np.linalg.norm(endpoint(0.04) - ref)
        e2 = np.linalg.norm(endpoint(0.02) - ref)
        assert 10 < e1 / e2 < 22

    def test_bad_dt_rejected(self, quad):
        with pytest.raises(ContractViolationError):
            integrate_step(quad, np.zeros(6), np.zeros(3), np.zeros(1), np.zeros(6), 0.0)


class TestSimulateClosedLoop:
    def test_hover_equilibrium(self, quad):
        x0 = np.array([1.0, -1.0, 1.5, 0, 0, 0])
        model = drag_quadrotor(true_cd=0.3, wbar=0.0)
        traj = simulate_closed_loop(model, _hover_policy, x0, (0, 1.0), model.true_theta, 0)
        assert np.allclose(traj.states, x0, atol=1e-12)

    def test_same_seed_bitwise_identical(self, quad):
        x0 = np.zeros(6)
        x0[2] = 1.0
        a = simulate_closed_loop(quad, _hover_policy, x0, (0, 1.0), quad.true_theta, 1234)
        b = simulate_closed_loop(quad, _hover_policy, x0, (0, 1.0), quad.true_theta, 1234)
        assert np.array_equal(a.states, b.states)
        assert np.array_equal(a.inputs, b.inputs)

    def test_open_loop_replay_reproduces_plan(self, quad):
        model = drag_quadrotor(true_cd=0.3, wbar=0.0)
        rng = np.random.default_rng(5)
        x0 = np.array([0, 0, 1.0, 0, 0, 0])
        plan = simulate_closed_loop(
            model, lambda t, x: HOVER + np.array([np.sin(t), 0, 0]), x0, (0, 1.0),
            model.true_theta, 0)
        replay = simulate_closed_loop(model, lambda t, x: plan.input_at(t), x0, (0, 1.0),
                                      model.true_theta, 7)
        assert np.allclose(replay.states, plan.states, atol=1e-10)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=15, deadline=None)
    def test_disturbance_within_bound(self, seed):
        model = drag_quadrotor(true_cd=0.0, wbar=0.07)
        # With cd=0 and hover input, rates reduce to (v, w): recover w exactly.
        x0 = np.array([0, 0, 1.0, 0, 0, 0])
        traj = simulate_closed_loop(model, _hover_policy, x0, (0, 0.5), model.true_theta, seed)
        accel = np.diff(traj.states[:, 3:], axis=0) / 0.02
        assert np.all(np.abs(accel) <= 0.07 + 1e-9)


class TestRegressionTuple:
    def test_constant_regressor_integrates_exactly(self):
        # Constant-velocity window: Phi constant, so Y = window * Phi * theta.
        model = drag_quadrotor(true_cd=0.25, wbar=0.0)
        v = np.array([2.0, 0, 0])
        x0 = np.concatenate([np.zeros(3), v])
        drag = 0.25 * np.linalg.norm(v) * v
        policy = lambda t, x: HOVER + 0.25 * np.linalg.norm(x[3:]) * x[3:]
        traj = simulate_closed_loop(model, policy, x0, (0, 1.0), model.true_theta, 0)
        tup = make_regression_tuple(model, traj, 1.0, 0.4)
        expected = 0.4 * np.concatenate([np.zeros(3), -np.linalg.norm(v) * v]) * 0.25
        assert np.allclose(tup.Y, expected, atol=1e-6)
        assert np.allclose(tup.Fmat @ model.true_theta, expected, atol=1e-6)

    def test_zero_window_rejected(self, quad):
        traj = simulate_closed_loop(quad, _hover_policy, np.zeros(6), (0, 1.0),
                                    quad.true_theta, 0)
        with pytest.raises(ContractViolationError):
            make_regression_tuple(quad, traj, 1.0, 0.0)

    def test_uncovered_window_rejected(self, quad):
        traj = simulate_closed_loop(quad, _hover_policy, np.zeros(6), (0, 1.0),
                                    quad.true_theta, 0)
        with pytest.raises(InsufficientDataError):
            make_regression_tuple(quad, traj, 0.2, 0.4)

    def test_quadrature_against_refined_grid(self):
        # Accelerating straight-line segment; the F column must match the
        # same integral evaluated on a 10x finer simulation grid.
        model = drag_quadrotor(true_cd=0.3, wbar=0.0)
        x0 = np.array([0, 0, 1.0, 0.5, 0, 0])
        policy = lambda t, x: HOVER + np.array([3.0, 0, 0])
        coarse = simulate_closed_loop(model, policy, x0, (0, 1.0), model.true_theta, 0,
                                      dt=0.02)
        fine = simulate_closed_loop(model, policy, x0, (0, 1.0), model.true_theta, 0,
                                    dt=0.002)
        tc = make_regression_tuple(model, coarse, 1.0, 0.4)
        tf = make_regression_tuple(model, fine, 1.0, 0.4)
        assert np.max(np.abs(tc.Fmat - tf.Fmat)) < 5e-4
