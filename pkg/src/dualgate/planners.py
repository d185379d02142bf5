"""Policy generators: sampled-tube robust backup, informative excitation
planner, nominal racing planner, ancillary tracking feedback, and the
low-speed pure-pursuit fallback.

All trajectory optimization is cross-entropy search over piecewise-constant
input sequences (knots held for knot_dt, replayed at the simulation step).
The robust backup replaces a formal invariant tube with a sampled tube: the
per-time deviation envelope of tracking rollouts under parameters drawn
from the current uncertainty box, inflated by a safety factor and checked
against fresh held-out rollouts.  The resulting certificate is empirical,
not formal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolationError, PlanningFailureError
from .models import (
    GRAVITY,
    Box,
    ModelSpec,
    Trajectory,
    _rk4_step_unchecked,
    rollout_batch,
    sample_disturbances,
)
from .racing import CarParams, Track, wrap_angle
from .smid import ParameterBox
from .worlds import QuadWorld, RaceWorld

# ---------------------------------------------------------------------------
# Cross-entropy input-sequence optimization


@dataclass
class CEMConfig:
    n_samples: int = 96
    n_iters: int = 8
    n_elites: int = 12
    knot_dt: float = 0.2
    init_std_frac: float = 0.35
    min_std_frac: float = 0.03
    smoothing: float = 0.4


@dataclass
class CEMResult:
    inputs: np.ndarray
    states: np.ndarray
    cost: float
    feasible: bool


def _open_loop_states(model: ModelSpec, x0, theta, inputs, dt):
    """Batched noise-free rollout of input sequences (S, T, m)."""
    S, T = inputs.shape[0], inputs.shape[1]
    theta_b = np.broadcast_to(np.asarray(theta, dtype=float), (S, model.param_dim))
    x = np.broadcast_to(np.asarray(x0, dtype=float), (S, model.state_dim)).copy()
    states = np.empty((S, T + 1, model.state_dim))
    alive = np.ones(S, dtype=bool)
    states[:, 0] = x
    zero_w = 0.0
    for t in range(T):
        x_next = _rk4_step_unchecked(model, x, inputs[:, t], theta_b, zero_w, dt)
        ok = np.all(np.isfinite(x_next), axis=-1) & (np.max(np.abs(x_next), axis=-1) < 1e9)
        alive &= ok
        x = np.where(alive[:, None], x_next, x)
        states[:, t + 1] = x
    return states, alive


def _moment_projector(n_knots: int) -> np.ndarray:
    """Remove net impulse and first moment from knot perturbations.

    Perturbations in the range of {1, t_f - t} shift the endpoint of a
    double-integrator-like system; projecting them out keeps samples close
    to the warm start's terminal state while still exploring the interior.
    """
    tau = np.arange(n_knots)[::-1].astype(float)
    B = np.stack([np.ones(n_knots), tau], axis=1)
    return np.eye(n_knots) - B @ np.linalg.solve(B.T @ B, B.T)


def optimize_inputs(
    model: ModelSpec,
    x0,
    theta,
    horizon: float,
    dt: float,
    cost_fn,
    cfg: CEMConfig,
    rng: np.random.Generator,
    init_mean: np.ndarray | None = None,
    endpoint_preserving: bool = False,
) -> CEMResult:
    """Cross-entropy search over knotted input sequences.

    cost_fn maps (times, states[S, T+1, n], inputs[S, T, m]) to
    (costs[S], feasible[S]); the best feasible sample ever seen wins,
    falling back to the best overall when nothing was feasible.  With
    endpoint_preserving, sampled perturbations are projected to carry no
    net impulse or first moment.
    """
    n_steps = max(1, int(round(horizon / dt)))
    knot_steps = max(1, int(round(cfg.knot_dt / dt)))
    n_knots = math.ceil(n_steps / knot_steps)
    lo, hi = model.input_bounds.lo, model.input_bounds.hi
    span = hi - lo

    if init_mean is None:
        mean = np.broadcast_to(0.5 * (lo + hi), (n_knots, model.input_dim)).copy()
    else:
        mean = _to_knots(init_mean, n_steps, knot_steps, n_knots)
    std = np.broadcast_to(cfg.init_std_frac * span, mean.shape).copy()
    min_std = cfg.min_std_frac * span
    times = dt * np.arange(n_steps + 1)
    projector = _moment_projector(n_knots) if endpoint_preserving and n_knots > 2 else None

    best = {"cost": np.inf, "inputs": None, "states": None, "feasible": False}
    best_any = {"cost": np.inf, "inputs": None, "states": None}

    for _ in range(cfg.n_iters):
        noise = rng.normal(0.0, std, size=(cfg.n_samples, n_knots, model.input_dim))
        if projector is not None:
            noise = np.einsum("jk,skm->sjm", projector, noise)
        samples = mean + noise
        samples[0] = mean
        samples = np.clip(samples, lo, hi)
        inputs = np.repeat(samples, knot_steps, axis=1)[:, :n_steps]
        states, alive = _open_loop_states(model, x0, theta, inputs, dt)
        costs, feas = cost_fn(times, states, inputs)
        costs = np.where(alive & np.isfinite(costs), costs, np.inf)
        feas = feas & alive

        order = np.argsort(costs)
        elites = samples[order[: cfg.n_elites]]
        new_mean = elites.mean(axis=0)
        new_std = elites.std(axis=0)
        mean = cfg.smoothing * mean + (1 - cfg.smoothing) * new_mean
        std = np.maximum(cfg.smoothing * std + (1 - cfg.smoothing) * new_std, min_std)

        i_best = order[0]
        if costs[i_best] < best_any["cost"]:
            best_any = {"cost": costs[i_best], "inputs": inputs[i_best], "states": states[i_best]}
        feas_costs = np.where(feas, costs, np.inf)
        i_feas = int(np.argmin(feas_costs))
        if feas_costs[i_feas] < best["cost"]:
            best = {"cost": feas_costs[i_feas], "inputs": inputs[i_feas],
                    "states": states[i_feas], "feasible": True}

    if best["inputs"] is None:
        if best_any["inputs"] is None:
            raise PlanningFailureError("all rollouts diverged during planning")
        return CEMResult(best_any["inputs"], best_any["states"], float(best_any["cost"]), False)
    return CEMResult(best["inputs"], best["states"], float(best["cost"]), True)


def _to_knots(inputs, n_steps, knot_steps, n_knots):
    """Downsample a per-step input sequence to knot means."""
    inputs = np.asarray(inputs, dtype=float)
    if len(inputs) < n_steps:
        pad = np.repeat(inputs[-1:], n_steps - len(inputs), axis=0)
        inputs = np.vstack([inputs, pad])
    knots = np.empty((n_knots, inputs.shape[1]))
    for k in range(n_knots):
        knots[k] = inputs[k * knot_steps : min((k + 1) * knot_steps, n_steps)].mean(axis=0)
    return knots


# ---------------------------------------------------------------------------
# Policies


def open_loop_policy(traj: Trajectory):
    """Replay the trajectory's piecewise-constant inputs (batched over x)."""

    def policy(t, x):
        u = traj.input_at(t)
        if x.ndim == 2:
            return np.broadcast_to(u, (x.shape[0], u.size))
        return u

    return policy


def switched_policy(segment: Trajectory, fallback):
    """Follow the segment inputs, then hand over to the fallback policy."""
    t_switch = segment.t1

    def policy(t, x):
        if t < t_switch - 1e-9:
            u = segment.input_at(t)
            if x.ndim == 2:
                return np.broadcast_to(u, (x.shape[0], u.size))
            return u
        return fallback(t, x)

    return policy


@dataclass(frozen=True)
class AncillaryGains:
    K: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "K", np.asarray(self.K, dtype=float))


def quad_pd_gains(kp: float = 4.0, kd: float = 3.2) -> AncillaryGains:
    K = np.hstack([kp * np.eye(3), kd * np.eye(3)])
    return AncillaryGains(K)


def tracking_policy(nominal: Trajectory, gains: AncillaryGains, input_box: Box):
    """u = u_nom(t) + K (x_nom(t) - x), saturated into the input box."""

    def policy(t, x):
        u_nom = nominal.input_at(t)
        x_nom = nominal.state_at(t)
        err = x_nom - x
        u = u_nom + err @ gains.K.T
        return input_box.clip(u)

    return policy


def ancillary_feedback(plan: "BackupPlan", t: float, x):
    """Spec-level ancillary law around the backup plan's nominal."""
    return tracking_policy(plan.nominal, plan.gains, plan.input_box)(t, x)


# ---------------------------------------------------------------------------
# Quadrotor mission objective


@dataclass
class QuadMissionObjective:
    goal: np.ndarray
    alpha: float = 0.1
    beta: float = 1.0
    goal_radius: float = 0.5
    terminal_weight: float = 60.0
    penalty_weight: float = 400.0

    def __post_init__(self):
        self.goal = np.asarray(self.goal, dtype=float)

    def stage_integral(self, states, inputs, dt):
        """Batched mission cost integral: alpha |u|^2 + beta |r - goal|^2."""
        effort = np.sum(inputs**2, axis=-1)
        dist2 = np.sum((states[..., :-1, :3] - self.goal) ** 2, axis=-1)
        return dt * np.sum(self.alpha * effort + self.beta * dist2, axis=-1)


def cost_of_trajectory(traj: Trajectory, objective: QuadMissionObjective) -> float:
    """Predicted mission cost of a planned trajectory (reads the plan only)."""
    dt = float(traj.times[1] - traj.times[0])
    return float(objective.stage_integral(traj.states[None], traj.inputs[None], dt)[0])


def guidance_inputs(model: ModelSpec, x0, waypoints, horizon: float, dt: float,
                    theta=None, kp: float = 2.2, kd: float = 2.4,
                    switch_radius: float = 0.6) -> np.ndarray:
    """Waypoint-PD input sequence used to warm-start the trajectory search.

    Steers through the waypoint list (last entry held), gravity
    compensated, inputs clipped to the box; simulated on the estimated
    dynamics so the sequence is kinematically sensible.
    """
    theta = np.zeros(model.param_dim) if theta is None else np.asarray(theta)
    n_steps = max(1, int(round(horizon / dt)))
    wps = [np.asarray(w, dtype=float) for w in waypoints]
    x = np.asarray(x0, dtype=float).copy()
    inputs = np.empty((n_steps, model.input_dim))
    wp_i = 0
    for j in range(n_steps):
        target = wps[wp_i]
        if wp_i < len(wps) - 1 and np.linalg.norm(x[:3] - target) < switch_radius:
            wp_i += 1
            target = wps[wp_i]
        u = kp * (target - x[:3]) + kd * (0.0 - x[3:]) - GRAVITY
        u = model.input_bounds.clip(u)
        inputs[j] = u
        x = _rk4_step_unchecked(model, x, u, theta, 0.0, dt)
    return inputs


# ---------------------------------------------------------------------------
# Sampled-tube robust backup


@dataclass
class TubeConfig:
    n_rollouts: int = 100
    n_holdout: int = 100
    inflation: float = 1.2
    floor: float = 0.02  # absolute additive margin on the sampled radii
    passes: int = 2
    plan_clearance: float = 0.12  # extra shaping margin for the nominal search


@dataclass
class BackupPlan:
    nominal: Trajectory
    tube_radii: np.ndarray
    input_radii: np.ndarray
    gains: AncillaryGains
    input_box: Box
    certified: bool
    horizon: float

    def policy(self):
        return tracking_policy(self.nominal, self.gains, self.input_box)


def estimate_tube(model: ModelSpec, nominal: Trajectory, gains: AncillaryGains,
                  box: ParameterBox, n_rollouts: int, rng: np.random.Generator,
                  inflation: float = 1.0, floor: float = 0.0):
    """Per-time deviation envelope of tracking rollouts around a nominal.

    Returns (state_radii[T+1, n], input_radii[T, m], all_alive); radii are
    the per-component max deviation across rollouts times the inflation.
    """
    T = len(nominal.inputs)
    dt = float(nominal.times[1] - nominal.times[0])
    thetas = box.sample(rng, n_rollouts)
    w_seqs = sample_disturbances(model, T, rng, batch=n_rollouts)
    rel_nominal = Trajectory(nominal.times - nominal.t0, nominal.states, nominal.inputs)
    policy = tracking_policy(rel_nominal, gains, model.input_bounds)
    _, states, inputs, alive = rollout_batch(model, policy, nominal.states[0], T, dt, thetas, w_seqs)
    dev = np.max(np.abs(states - nominal.states[None]), axis=0)
    dev_u = np.max(np.abs(inputs - nominal.inputs[None]), axis=0)
    radii = inflation * dev + floor
    radii[0] = dev[0]  # exact initial state, no margin needed
    return radii, inflation * dev_u + floor, bool(np.all(alive))


def _within_tube(states, nominal_states, radii) -> np.ndarray:
    return np.all(np.abs(states - nominal_states[None]) <= radii[None] + 1e-9, axis=(1, 2))


def plan_backup(
    model: ModelSpec,
    x_k,
    box: ParameterBox,
    world: QuadWorld,
    objective: QuadMissionObjective,
    T_B: float,
    gains: AncillaryGains,
    cem: CEMConfig,
    rng: np.random.Generator,
    tube: TubeConfig | None = None,
    dt: float = 0.02,
    init_mean: np.ndarray | None = None,
) -> BackupPlan:
    """Robust backup plan: nominal + sampled tube + ancillary feedback.

    Alternates nominal optimization under tightened constraints with tube
    re-estimation, then certifies the result on held-out rollouts.  Raises
    PlanningFailureError when no tightened-constraint-satisfying nominal is
    found.
    """
    tube = tube or TubeConfig()
    theta_hat = box.midpoint
    n_steps = max(1, int(round(T_B / dt)))
    planned_against = np.zeros((n_steps + 1, model.state_dim))
    planned_against_u = np.zeros((n_steps, model.input_dim))

    def _checks(traj, r, ur):
        tight = bool(np.all(world.state_ok(traj.states, radii=r)))
        inp = bool(np.all(traj.inputs >= model.input_bounds.lo + ur - 1e-9)
                   and np.all(traj.inputs <= model.input_bounds.hi - ur + 1e-9))
        return tight, inp

    plan_traj = None
    for _ in range(max(1, tube.passes) + 1):
        cost_fn = _backup_cost_fn(model, world, objective, planned_against,
                                  planned_against_u, dt, clearance=tube.plan_clearance)
        if init_mean is not None:
            # keep the warm start inside the tightened input bounds (using
            # the worst headroom over each knot block so the clipped warm
            # start stays knot-constant), else the headroom hinge poisons it
            ks = max(1, int(round(cem.knot_dt / dt)))
            pad = planned_against_u.copy()
            for b in range(0, n_steps, ks):
                pad[b:b + ks] = pad[b:b + ks].max(axis=0)
            n_init = min(len(init_mean), n_steps)
            init_mean = np.clip(init_mean[:n_init],
                                model.input_bounds.lo + pad[:n_init],
                                model.input_bounds.hi - pad[:n_init])
        res = optimize_inputs(model, x_k, theta_hat, T_B, dt, cost_fn, cem, rng, init_mean=init_mean)
        init_mean = res.inputs
        plan_traj = Trajectory(dt * np.arange(n_steps + 1), res.states, res.inputs, tag="backup")
        radii, u_radii, _ = estimate_tube(model, plan_traj, gains, box, tube.n_rollouts,
                                          rng, inflation=tube.inflation, floor=tube.floor)
        tight_ok, input_ok = _checks(plan_traj, radii, u_radii)
        if tight_ok and input_ok:
            break
        planned_against, planned_against_u = radii, u_radii

    holdout_r, holdout_u, alive = estimate_tube(model, plan_traj, gains, box, tube.n_holdout,
                                                rng, inflation=1.0)
    if np.any(holdout_r > radii + 1e-9):
        radii = np.maximum(radii, tube.inflation * holdout_r)
        u_radii = np.maximum(u_radii, tube.inflation * holdout_u)
    tight_ok, input_ok = _checks(plan_traj, radii, u_radii)
    if not tight_ok:
        raise PlanningFailureError("no nominal satisfies the tightened constraints")
    certified = alive and input_ok and tight_ok
    return BackupPlan(plan_traj, radii, u_radii, gains, model.input_bounds, certified, T_B)


def _backup_cost_fn(model, world, objective, radii, u_radii, dt, clearance: float = 0.0):
    """Tightened-constraint CEM cost; the shaping penalty adds clearance on
    top of the tube radii while feasibility is judged against the radii
    alone (matching the certificate)."""
    lo_u = model.input_bounds.lo + u_radii
    hi_u = model.input_bounds.hi - u_radii

    def cost_fn(times, states, inputs):
        mission = objective.stage_integral(states, inputs, dt)
        pen_shaped = dt * np.sum(world.penalty(states, radii=radii[None] + clearance), axis=-1)
        pen_feas = dt * np.sum(world.penalty(states, radii=radii[None]), axis=-1)
        u_pen = np.sum(np.clip(lo_u - inputs, 0, None) ** 2 + np.clip(inputs - hi_u, 0, None) ** 2,
                       axis=(-1, -2))
        goal_slack = max(objective.goal_radius - radii[-1, :3].max(), 0.1)
        term_dist = np.linalg.norm(states[:, -1, :3] - objective.goal, axis=-1)
        term = np.clip(term_dist - goal_slack, 0, None) ** 2
        term_v = np.sum(states[:, -1, 3:] ** 2, axis=-1)
        cost = mission + objective.penalty_weight * (pen_shaped + u_pen) \
            + objective.terminal_weight * (term + 0.1 * term_v)
        feas = (pen_feas + u_pen <= 1e-9) & (term <= 1e-4)
        return cost, feas

    return cost_fn


# ---------------------------------------------------------------------------
# Informative planning


@dataclass
class InfoObjective:
    gamma: float = 1.0
    W_theta: np.ndarray | None = None
    epsilon_reg: float = 1e-6

    def weight_sqrt(self, p: int) -> np.ndarray:
        if self.W_theta is None:
            return np.eye(p)
        W = np.asarray(self.W_theta, dtype=float)
        vals, vecs = np.linalg.eigh(W)
        if np.any(vals <= 0):
            raise ContractViolationError("W_theta must be positive definite")
        return vecs @ np.diag(np.sqrt(vals)) @ vecs.T


def information_matrix(model: ModelSpec, states, inputs, dt, w_sqrt):
    """Trapezoid accumulation of W^{1/2} Phi^T Phi W^{1/2} along rollouts."""
    phi_l = model.regressor(states[..., :-1, :], inputs)
    phi_r = model.regressor(states[..., 1:, :], inputs)
    gram = 0.5 * dt * (np.einsum("...tnp,...tnq->...pq", phi_l, phi_l)
                       + np.einsum("...tnp,...tnq->...pq", phi_r, phi_r))
    return w_sqrt @ gram @ w_sqrt


@dataclass
class InformativePlan:
    traj: Trajectory
    terminal_error: float
    recoverable: bool
    logdet: float


def plan_informative_segment(
    model: ModelSpec,
    x_k,
    theta_hat,
    horizon: float,
    terminal_state,
    info: InfoObjective,
    stage_cost_fn,
    cem: CEMConfig,
    rng: np.random.Generator,
    dt: float = 0.02,
    init_mean: np.ndarray | None = None,
    terminal_scale: np.ndarray | None = None,
    terminal_weight: float = 300.0,
    delta_term: float = 0.05,
    endpoint_preserving: bool | None = None,
) -> InformativePlan:
    """Excitation planning: stage cost minus gamma * logdet(I + eps I_p).

    When terminal_state is given, the terminal recoverability condition is
    enforced as a quadratic penalty and the plan is marked non-recoverable
    if the normalized terminal error stays above delta_term.
    """
    p = model.param_dim
    w_sqrt = info.weight_sqrt(p)
    eps_eye = info.epsilon_reg * np.eye(p)
    if terminal_state is not None:
        terminal_state = np.asarray(terminal_state, dtype=float)
        scale = np.ones(model.state_dim) if terminal_scale is None else np.asarray(terminal_scale)

    def cost_fn(times, states, inputs):
        base, feas = stage_cost_fn(times, states, inputs)
        gram = information_matrix(model, states, inputs, dt, w_sqrt)
        _, logdet = np.linalg.slogdet(gram + eps_eye)
        cost = base - info.gamma * logdet
        if terminal_state is not None:
            err = np.linalg.norm((states[:, -1] - terminal_state) / scale, axis=-1)
            cost = cost + terminal_weight * err**2
            feas = feas & (err <= delta_term)
        return cost, feas

    if endpoint_preserving is None:
        endpoint_preserving = terminal_state is not None
    res = optimize_inputs(model, x_k, theta_hat, horizon, dt, cost_fn, cem, rng,
                          init_mean=init_mean, endpoint_preserving=endpoint_preserving)
    n_steps = len(res.inputs)
    traj = Trajectory(dt * np.arange(n_steps + 1), res.states, res.inputs, tag="informative")
    gram = information_matrix(model, res.states[None], res.inputs[None], dt, w_sqrt)[0]
    _, logdet = np.linalg.slogdet(gram + eps_eye)
    if terminal_state is None:
        return InformativePlan(traj, 0.0, True, float(logdet))
    err = float(np.linalg.norm((res.states[-1] - terminal_state) / scale))
    return InformativePlan(traj, err, err <= delta_term and res.feasible, float(logdet))


# ---------------------------------------------------------------------------
# Racing planners


@dataclass
class RacingObjective:
    v_ref: float = 6.0
    q_prog: float = 2.0
    q_epsi: float = 0.8
    q_v: float = 0.06
    q_vy: float = 0.05
    q_omega: float = 0.02
    r_u: tuple = (2e-5, 1e-5, 0.05)
    r_du: tuple = (2e-5, 1e-5, 0.2)
    q_boundary: float = 400.0
    boundary_margin: float = 0.55
    q_envelope: float = 200.0
    v_floor: float = 0.3
    v_cap: float = 8.0

    def mission_rate(self, progress_rate):
        """Mission cost rate: progress shortfall below the speed cap."""
        return np.clip(self.v_cap - progress_rate, 0.0, None)


def racing_progress(world: RaceWorld, states, hint0=None):
    """Unwrapped progress along rollouts (B, T+1) plus the frame sweep."""
    ok, s, e_y, idx_path = world.sweep_states(states, hint0=hint0)
    L = world.track.length
    ds = np.diff(s, axis=-1)
    ds = np.where(ds > L / 2, ds - L, ds)
    ds = np.where(ds < -L / 2, ds + L, ds)
    prog = np.concatenate([np.zeros(s.shape[:-1] + (1,)), np.cumsum(ds, axis=-1)], axis=-1)
    return prog, ok, s, e_y, idx_path


def racing_stage_cost_fn(model: ModelSpec, world: RaceWorld, obj: RacingObjective, dt: float,
                         hint0=None):
    """CEM cost over racing rollouts: track progress vs tracking/boundary terms."""
    r_u = np.asarray(obj.r_u)
    r_du = np.asarray(obj.r_du)
    half = world.track.half_width - obj.boundary_margin

    def cost_fn(times, states, inputs):
        prog, ok, s, e_y, idx_path = racing_progress(world, states, hint0=hint0)
        e_psi = wrap_angle(states[..., 2] - world.track.heading_at(idx_path))
        vx, vy, om = states[..., 3], states[..., 4], states[..., 5]
        stage = (obj.q_epsi * e_psi**2 + obj.q_v * (vx - obj.v_ref) ** 2
                 + obj.q_vy * vy**2 + obj.q_omega * om**2)
        boundary = np.clip(np.abs(e_y) - half, 0.0, None) ** 2
        # Keep the search inside the model's valid operating envelope:
        # no stalling, no saturated sideslip or yaw rate.
        envelope = (np.clip(obj.v_floor - vx, 0.0, None) ** 2
                    + np.clip(np.abs(vy) - 3.2, 0.0, None) ** 2
                    + np.clip(np.abs(om) - 4.8, 0.0, None) ** 2)
        du = np.diff(inputs, axis=-2)
        cost = (-obj.q_prog * prog[:, -1]
                + dt * np.sum(stage[:, :-1], axis=-1)
                + obj.q_boundary * dt * np.sum(boundary, axis=-1)
                + obj.q_envelope * dt * np.sum(envelope, axis=-1)
                + np.sum(inputs**2 @ r_u, axis=-1)
                + np.sum(du**2 @ r_du, axis=-1))
        feas = np.all(ok, axis=-1)
        return cost, feas

    return cost_fn


def corner_speed_cap(mu: float, radius: float, grip_frac: float = 0.75) -> float:
    """Grip-limited cornering speed sqrt(grip_frac * mu * g * R)."""
    return float(np.sqrt(max(grip_frac * mu * 9.81 * radius, 0.01)))


def race_guidance_inputs(model: ModelSpec, car: CarParams, track: Track, x, theta_plan,
                         v_max: float, horizon: float, dt: float,
                         pp: PursuitParams | None = None, grip_frac: float = 0.75,
                         cap_frac: float = 0.92) -> np.ndarray:
    """Pursuit-following input sequence on the estimated dynamics.

    Simulates the pure-pursuit steering law with a curvature-aware speed
    setpoint (grip-limited in the upcoming corner, v_max on straights)
    under theta_plan; the applied inputs warm-start the racing search with
    a sane driving line.
    """
    base = pp or PursuitParams()
    n_steps = max(1, int(round(horizon / dt)))
    theta = np.asarray(theta_plan, dtype=float)
    mu_hat = float(theta.ravel()[0])
    state = np.asarray(x, dtype=float).copy()
    inputs = np.empty((n_steps, model.input_dim))
    hint = None
    for j in range(n_steps):
        hint_arr = None if hint is None else np.asarray([hint])
        look = 2.0 + 0.06 * state[3] ** 2  # braking-distance lookahead
        _, _, idx = track.project(state[None, :2], hint=hint_arr)
        kappa = float(track.max_curvature_ahead(idx, look)[0])
        radius = 1.0 / max(kappa, 1e-9)
        v_cmd = min(v_max, cap_frac * corner_speed_cap(mu_hat, radius, grip_frac))
        setpoint = PursuitParams(v_safe=v_cmd, lookahead_min=base.lookahead_min,
                                 lookahead_gain=base.lookahead_gain, k_steer=base.k_steer,
                                 accel_gain=base.accel_gain,
                                 off_corridor_margin=base.off_corridor_margin)
        u, idx2 = pursuit_input(track, car, model, state[None], setpoint, hint=hint_arr)
        hint = int(idx2[0])
        u = model.input_bounds.clip(u[0])
        inputs[j] = u
        state = _rk4_step_unchecked(model, state, u, theta, 0.0, dt)
    return inputs


@dataclass
class NominalPlan:
    traj: Trajectory
    feasible: bool


def plan_nominal_racing(
    model: ModelSpec,
    x_k,
    theta_hat,
    horizon: float,
    world: RaceWorld,
    obj: RacingObjective,
    cem: CEMConfig,
    rng: np.random.Generator,
    dt: float = 0.02,
    init_mean: np.ndarray | None = None,
) -> NominalPlan:
    """Performance racing plan on the estimated dynamics, no robustness margin.

    The best sample is returned even if it violates the track constraints;
    the feasible flag reports whether it stayed inside under the model used
    for planning.
    """
    cost_fn = racing_stage_cost_fn(model, world, obj, dt)
    res = optimize_inputs(model, x_k, theta_hat, horizon, dt, cost_fn, cem, rng, init_mean=init_mean)
    n_steps = len(res.inputs)
    traj = Trajectory(dt * np.arange(n_steps + 1), res.states, res.inputs, tag="nominal")
    return NominalPlan(traj, res.feasible)


# ---------------------------------------------------------------------------
# Pure-pursuit fallback


@dataclass
class PursuitParams:
    v_safe: float = 2.0
    lookahead_min: float = 0.8
    lookahead_gain: float = 0.6
    k_steer: float = 6.0
    accel_gain: float = 2.4
    off_corridor_margin: float = 0.3


def pursuit_input(track: Track, car: CarParams, model: ModelSpec, x, pp: PursuitParams,
                  hint=None):
    """Pure-pursuit fallback input for (possibly batched) car states."""
    x = np.asarray(x, dtype=float)
    batched = x.ndim == 2
    X = x if batched else x[None]
    s, e_y, idx = track.project(X[:, :2], hint=hint)
    v_x = X[:, 3]
    look = pp.lookahead_min + pp.lookahead_gain * np.clip(v_x, 0.0, None)
    target = track.centerline_point(s + look)
    d = target - X[:, :2]
    angle = wrap_angle(np.arctan2(d[:, 1], d[:, 0]) - X[:, 2])
    dist = np.maximum(np.linalg.norm(d, axis=-1), 1e-6)
    curvature = 2.0 * np.sin(angle) / dist
    delta_des = np.clip(np.arctan(car.wheelbase * curvature),
                        model.state_bounds.lo[6], model.state_bounds.hi[6])
    ddelta = np.clip(pp.k_steer * (delta_des - X[:, 6]),
                     model.input_bounds.lo[2], model.input_bounds.hi[2])

    a_des = pp.accel_gain * (pp.v_safe - v_x)
    force = car.m * a_des
    f_d = np.clip(force, 0.0, model.input_bounds.hi[0])
    f_b = np.clip(force, model.input_bounds.lo[1], 0.0)

    off = np.abs(e_y) > track.half_width + pp.off_corridor_margin
    f_d = np.where(off, 0.0, f_d)
    f_b = np.where(off, model.input_bounds.lo[1], f_b)

    u = np.stack([f_d, f_b, ddelta], axis=-1)
    return (u, idx) if batched else (u[0], idx)


def fallback_pursuit(track: Track, car: CarParams, model: ModelSpec, x,
                     pp: PursuitParams | None = None):
    """Single-state pure-pursuit input (spec surface; no projection hint)."""
    u, _ = pursuit_input(track, car, model, x, pp or PursuitParams())
    return u


def pursuit_policy(track: Track, car: CarParams, model: ModelSpec,
                   pp: PursuitParams | None = None):
    """Batched fallback policy with a warm-started projection hint."""
    pp = pp or PursuitParams()
    state = {"hint": None}

    def policy(t, x):
        batched = x.ndim == 2
        u, idx = pursuit_input(track, car, model, x if batched else x[None], pp,
                               hint=state["hint"])
        state["hint"] = idx
        return u if batched else u[0]

    return policy
