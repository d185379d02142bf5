import numpy as np
import pytest

from dualgate.models import Trajectory, drag_quadrotor, simulate_closed_loop
from dualgate.planners import (
    CEMConfig,
    InfoObjective,
    PursuitParams,
    QuadMissionObjective,
    TubeConfig,
    ancillary_feedback,
    cost_of_trajectory,
    estimate_tube,
    fallback_pursuit,
    guidance_inputs,
    information_matrix,
    plan_backup,
    plan_informative_segment,
    pursuit_policy,
    quad_pd_gains,
    tracking_policy,
)
from dualgate.smid import ParameterBox
from dualgate.worlds import BoxObstacle, QuadWorld

HOVER = np.array([0.0, 0.0, 9.81])


def _world(model, goal=(6.0, 0.0, 1.0)):
    return QuadWorld(state_box=model.state_bounds, obstacles=[],
                     goal=np.array(goal), goal_radius=0.5)


def _stage(model, objective, dt=0.02):
    def stage(times, states, inputs):
        cost = objective.stage_integral(states, inputs, dt)
        return cost, np.ones(len(cost), dtype=bool)

    return stage


class TestAncillaryFeedback:
    def _plan(self, model):
        x0 = np.array([0, 0, 1.0, 0, 0, 0])
        traj = simulate_closed_loop(model, lambda t, x: HOVER, x0, (0, 1.0),
                                    model.true_theta, 0)
        from dualgate.planners import BackupPlan

        return BackupPlan(traj, np.zeros_like(traj.states), np.zeros_like(traj.inputs),
                          quad_pd_gains(), model.input_bounds, True, 1.0)

    def test_on_nominal_returns_nominal_input(self, quad):
        plan = self._plan(quad)
        u = ancillary_feedback(plan, 0.3, plan.nominal.state_at(0.3))
        assert np.allclose(u, plan.nominal.input_at(0.3), atol=1e-9)

    def test_correction_opposes_perturbation(self, quad):
        plan = self._plan(quad)
        x = plan.nominal.state_at(0.5)
        for axis in range(3):
            dx = np.zeros(6)
            dx[axis] = 0.1
            u = ancillary_feedback(plan, 0.5, x + dx)
            u0 = ancillary_feedback(plan, 0.5, x)
            assert u[axis] < u0[axis]

    def test_zero_gains_open_loop(self, quad):
        plan = self._plan(quad)
        from dualgate.planners import AncillaryGains, BackupPlan

        plan_zero = BackupPlan(plan.nominal, plan.tube_radii, plan.input_radii,
                               AncillaryGains(np.zeros((3, 6))), quad.input_bounds, True, 1.0)
        x = plan.nominal.state_at(0.4) + np.array([1.0, -1.0, 0.2, 0, 0, 0])
        u = ancillary_feedback(plan_zero, 0.4, x)
        assert np.allclose(u, plan.nominal.input_at(0.4))


class TestTubeEstimation:
    def test_point_box_no_noise_zero_tube(self):
        model = drag_quadrotor(true_cd=0.3, wbar=0.0)
        x0 = np.array([0, 0, 1.0, 0, 0, 0])
        nominal = simulate_closed_loop(model, lambda t, x: HOVER, x0, (0, 1.0),
                                       model.true_theta, 0)
        radii, u_radii, alive = estimate_tube(model, nominal, quad_pd_gains(),
                                              ParameterBox([0.3], [0.3]), 20,
                                              np.random.default_rng(0))
        assert alive
        assert np.max(radii) < 1e-9

    def test_wider_box_never_smaller_tube(self):
        # Worst-case deviation per component grows with the sampled box.
        model = drag_quadrotor(true_cd=0.3, wbar=0.02)
        x0 = np.array([0, 0, 1.0, 1.5, 0, 0])
        nominal = simulate_closed_loop(model, lambda t, x: HOVER, x0, (0, 1.5),
                                       model.true_theta, 0)
        rng_narrow = np.random.default_rng(42)
        rng_wide = np.random.default_rng(42)
        narrow, _, _ = estimate_tube(model, nominal, quad_pd_gains(),
                                     ParameterBox([0.25], [0.35]), 100, rng_narrow)
        wide, _, _ = estimate_tube(model, nominal, quad_pd_gains(),
                                   ParameterBox([0.0], [0.6]), 100, rng_wide)
        assert np.all(wide.max(axis=0) >= narrow.max(axis=0) - 2e-3)


class TestPlanBackup:
    def test_plan_reaches_goal_and_certifies(self, quad):
        world = _world(quad)
        obj = QuadMissionObjective(goal=world.goal)
        rng = np.random.default_rng(0)
        init = guidance_inputs(quad, np.array([0, 0, 1.0, 0, 0, 0]), [world.goal], 6.0,
                               0.02, theta=np.array([0.25]))
        plan = plan_backup(quad, np.array([0, 0, 1.0, 0, 0, 0]), ParameterBox([0.0], [0.5]),
                           world, obj, 6.0, quad_pd_gains(),
                           CEMConfig(n_samples=96, n_iters=8, knot_dt=0.4), rng,
                           tube=TubeConfig(n_rollouts=32, n_holdout=32, passes=2),
                           init_mean=init)
        assert plan.certified
        assert np.linalg.norm(plan.nominal.states[-1, :3] - world.goal) < 0.6

    def test_goal_inside_obstacle_fails(self, quad):
        world = QuadWorld(state_box=quad.state_bounds,
                          obstacles=[BoxObstacle([5.0, -1.0, 0.0], [7.0, 1.0, 3.0])],
                          goal=np.array([6.0, 0.0, 1.0]), goal_radius=0.3)
        obj = QuadMissionObjective(goal=world.goal)
        from dualgate.errors import PlanningFailureError

        with pytest.raises(PlanningFailureError):
            plan_backup(quad, np.array([0, 0, 1.0, 0, 0, 0]), ParameterBox([0.0], [0.5]),
                        world, obj, 4.0, quad_pd_gains(),
                        CEMConfig(n_samples=48, n_iters=4, knot_dt=0.4),
                        np.random.default_rng(1),
                        tube=TubeConfig(n_rollouts=16, n_holdout=16, passes=1))

    def test_held_out_rollouts_stay_in_tube(self, quad):
        # Empirical certificate: fresh rollouts inside the inflated radii.
        world = _world(quad)
        obj = QuadMissionObjective(goal=world.goal)
        rng = np.random.default_rng(3)
        box = ParameterBox([0.1], [0.4])
        init = guidance_inputs(quad, np.array([0, 0, 1.0, 0, 0, 0]), [world.goal], 5.0,
                               0.02, theta=box.midpoint)
        plan = plan_backup(quad, np.array([0, 0, 1.0, 0, 0, 0]), box, world, obj, 5.0,
                           quad_pd_gains(), CEMConfig(n_samples=96, n_iters=6, knot_dt=0.4),
                           rng, tube=TubeConfig(n_rollouts=48, n_holdout=48, passes=2),
                           init_mean=init)
        fresh, _, _ = estimate_tube(quad, plan.nominal, plan.gains, box, 100,
                                    np.random.default_rng(999))
        frac_inside = np.mean(fresh <= plan.tube_radii + 1e-9)
        assert frac_inside >= 0.99


class TestInformativePlanner:
    def _reference(self, quad, x0, horizon=2.0):
        """Reachable terminal state: the endpoint of a reference rollout,
        mirroring how the engine anchors informative segments to the backup
        nominal."""
        from dualgate.planners import _open_loop_states

        init = guidance_inputs(quad, x0, [np.array([2.0, 0, 1.0])], horizon, 0.02,
                               theta=np.array([0.25]))
        states, _ = _open_loop_states(quad, x0, np.array([0.25]), init[None], 0.02)
        return init, states[0, -1]

    def test_gamma_zero_reduces_to_tracking(self, quad):
        obj = QuadMissionObjective(goal=np.array([3.0, 0, 1.0]))
        x0 = np.array([0, 0, 1.0, 0, 0, 0])
        init, terminal = self._reference(quad, x0)
        out = plan_informative_segment(
            quad, x0, np.array([0.25]), 2.0, terminal, InfoObjective(gamma=0.0),
            _stage(quad, obj), CEMConfig(n_samples=48, n_iters=5, knot_dt=0.4),
            np.random.default_rng(0), init_mean=init, terminal_scale=np.ones(6))
        assert out.recoverable
        assert out.terminal_error <= 0.05

    def test_large_gamma_increases_excitation(self, quad):
        obj = QuadMissionObjective(goal=np.array([3.0, 0, 1.0]))
        x0 = np.array([0, 0, 1.0, 0, 0, 0])
        init, terminal = self._reference(quad, x0)

        def solve(gamma, seed=0):
            return plan_informative_segment(
                quad, x0, np.array([0.25]), 2.0, terminal, InfoObjective(gamma=gamma),
                _stage(quad, obj), CEMConfig(n_samples=64, n_iters=6, knot_dt=0.4),
                np.random.default_rng(seed), init_mean=init, terminal_scale=np.ones(6))

        tame = solve(0.0)
        wild = solve(60.0)
        excitation = lambda p: np.sum(np.linalg.norm(p.traj.states[:, 3:], axis=1) ** 2)
        assert excitation(wild) > excitation(tame)
        assert wild.logdet > tame.logdet

    def test_info_matrix_against_dense_quadrature(self, quad):
        # p = 1 drag model: the information scalar is the integral of the
        # squared drag regressor; refine the grid 10x and compare.
        model = drag_quadrotor(true_cd=0.3, wbar=0.0)
        x0 = np.array([0, 0, 1.0, 0.5, 0, 0])
        policy = lambda t, x: HOVER + np.array([2.0 * np.cos(t), 0, 0])
        coarse = simulate_closed_loop(model, policy, x0, (0, 1.0), model.true_theta, 0,
                                      dt=0.02)
        fine = simulate_closed_loop(model, policy, x0, (0, 1.0), model.true_theta, 0,
                                    dt=0.002)
        Ic = information_matrix(model, coarse.states[None], coarse.inputs[None], 0.02,
                                np.eye(1))[0, 0, 0]
        If = information_matrix(model, fine.states[None], fine.inputs[None], 0.002,
                                np.eye(1))[0, 0, 0]
        assert Ic == pytest.approx(If, rel=2e-2)

    def test_information_monotone_in_horizon(self, quad):
        model = drag_quadrotor(true_cd=0.3, wbar=0.0)
        x0 = np.array([0, 0, 1.0, 1.0, 0, 0])
        policy = lambda t, x: HOVER + np.array([1.0, 0.5, 0])
        traj = simulate_closed_loop(model, policy, x0, (0, 2.0), model.true_theta, 0)
        vals = []
        for steps in (20, 50, 80, 100):
            sub = Trajectory(traj.times[: steps + 1], traj.states[: steps + 1],
                             traj.inputs[:steps])
            I = information_matrix(model, sub.states[None], sub.inputs[None], 0.02,
                                   np.eye(1))[0]
            vals.append(np.linalg.slogdet(I + 1e-6 * np.eye(1))[1])
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_unreachable_terminal_flagged(self, quad):
        obj = QuadMissionObjective(goal=np.array([3.0, 0, 1.0]))
        x0 = np.array([0, 0, 1.0, 0, 0, 0])
        terminal = np.array([30.0, 0, 1.0, 0, 0, 0])  # not reachable in 1 s
        out = plan_informative_segment(
            quad, x0, np.array([0.25]), 1.0, terminal, InfoObjective(gamma=1.0),
            _stage(quad, obj), CEMConfig(n_samples=32, n_iters=3, knot_dt=0.2),
            np.random.default_rng(0), terminal_scale=np.ones(6))
        assert not out.recoverable


class TestCostOfTrajectory:
    def test_reads_planned_data_only(self, quad):
        obj = QuadMissionObjective(goal=np.array([1.0, 0, 1.0]))
        traj = simulate_closed_loop(quad, lambda t, x: HOVER, np.zeros(6), (0, 1.0),
                                    quad.true_theta, 0)
        c1 = cost_of_trajectory(traj, obj)
        # mutating executed-state history elsewhere cannot change the value
        c2 = cost_of_trajectory(Trajectory(traj.times.copy(), traj.states.copy(),
                                           traj.inputs.copy()), obj)
        assert c1 == c2
        by_hand = 0.02 * sum(
            obj.alpha * np.sum(traj.inputs[j] ** 2)
            + obj.beta * np.sum((traj.states[j, :3] - obj.goal) ** 2)
            for j in range(len(traj.inputs)))
        assert c1 == pytest.approx(by_hand)


class TestFallbackPursuit:
    def test_centerline_aligned_near_zero_steer_rate(self, track, car_params, car):
        x = np.zeros(7)
        x[:2] = track.waypoints[20]
        x[2] = track.headings[20]
        x[3] = 2.0
        u = fallback_pursuit(track, car_params, car, x)
        assert abs(u[2]) < 0.3

    def test_offset_steers_back_toward_centerline(self, track, car_params, car):
        wp, tang = track.waypoints[10], track.tangents[10]
        left_normal = np.array([-tang[1], tang[0]])
        for sign in (+1, -1):
            x = np.zeros(7)
            x[:2] = wp + sign * 0.8 * left_normal
            x[2] = track.headings[10]
            x[3] = 2.0
            u = fallback_pursuit(track, car_params, car, x)
            # steer-rate command pushes the wheel against the offset side
            assert np.sign(u[2]) == -sign

    def test_speed_regulated_to_v_safe(self, track, car_params, car):
        x = np.zeros(7)
        x[:2] = track.waypoints[30]
        x[2] = track.headings[30]
        x[3] = 4.0  # above v_safe
        u = fallback_pursuit(track, car_params, car, x)
        assert u[0] == 0.0 and u[1] < 0.0

    @pytest.mark.slow
    def test_safe_across_mu_grid_two_laps(self, track, car_params):
        # "Conservative safe behavior" premise: no boundary violation across
        # admissible friction values.
        from dualgate.models import simulate_closed_loop
        from dualgate.racing import car_model
        from dualgate.worlds import RaceWorld

        for mu in (0.2, 0.65, 1.1, 1.55, 2.0):
            model = car_model(car_params, true_mu=mu, wbar=0.03)
            world = RaceWorld(track, model.state_bounds)
            pol = pursuit_policy(track, car_params, model)
            x0 = np.zeros(7)
            x0[:2] = track.waypoints[0]
            x0[2] = track.headings[0]
            x0[3] = 0.5
            traj = simulate_closed_loop(model, lambda t, x: pol(t, x[None])[0], x0,
                                        (0, 90.0), model.true_theta, disturbance_seed=11)
            ok, s, e_y, _ = world.sweep_states(traj.states[None])
            assert bool(np.all(ok)), f"violation at mu={mu}"
            assert np.abs(e_y).max() < track.half_width
