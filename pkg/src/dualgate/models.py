"""Parametric control-affine dynamics, integration, and integral regression.

Systems have the form

    dx/dt = f0(x) + Phi(x, u) @ theta + g0(x) @ u + w(t),

with theta an unknown constant parameter vector and w a per-component
bounded disturbance, |w_i| <= wbar.  All model callables are vectorized
over a leading batch axis: f0 maps (..., n) -> (..., n), g0 maps
(..., n) -> (..., n, m) and the regressor maps ((..., n), (..., m)) ->
(..., n, p).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    ContractViolationError,
    InsufficientDataError,
    NumericalBlowupError,
    PolicyFailureError,
)

DEFAULT_DT = 0.02

GRAVITY = np.array([0.0, 0.0, -9.81])


@dataclass(frozen=True)
class Box:
    """Axis-aligned box used for state and input constraint sets."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))
        if self.lo.shape != self.hi.shape or np.any(self.lo > self.hi):
            raise ContractViolationError("box bounds must satisfy lo <= hi")

    @property
    def dim(self) -> int:
        return self.lo.size

    def contains(self, x, tol: float = 0.0):
        x = np.asarray(x)
        return np.all((x >= self.lo - tol) & (x <= self.hi + tol), axis=-1)

    def clip(self, x):
        return np.clip(x, self.lo, self.hi)

    def sample(self, rng: np.random.Generator, size=None):
        shape = (self.dim,) if size is None else (size, self.dim)
        return rng.uniform(self.lo, self.hi, size=shape)


@dataclass(frozen=True)
class ModelSpec:
    """A control-affine model with linear-in-parameters uncertainty.

    rate, when provided, is a fused implementation of
    f0 + Phi theta + g0 u + w used on hot paths; it must agree with the
    component maps to machine precision (tested per model).
    """

    name: str
    state_dim: int
    input_dim: int
    param_dim: int
    f0: Callable[[np.ndarray], np.ndarray]
    g0: Callable[[np.ndarray], np.ndarray]
    regressor: Callable[[np.ndarray, np.ndarray], np.ndarray]
    true_theta: np.ndarray
    disturbance_bound: float
    state_bounds: Box
    input_bounds: Box
    rate: Callable | None = None

    def __post_init__(self):
        object.__setattr__(self, "true_theta", np.asarray(self.true_theta, dtype=float))
        if self.true_theta.shape != (self.param_dim,):
            raise ContractViolationError("true_theta must be a p-vector")
        if self.disturbance_bound < 0:
            raise ContractViolationError("disturbance bound must be >= 0")


@dataclass
class Trajectory:
    """Time-stamped state/input sequence on a uniform grid.

    Inputs are piecewise constant: inputs[j] is applied on
    [times[j], times[j+1]), so len(inputs) == len(times) - 1.
    """

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    tag: str = "nominal"

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        self.inputs = np.asarray(self.inputs, dtype=float)
        if len(self.states) != len(self.times):
            raise ContractViolationError("len(states) must equal len(times)")
        if len(self.inputs) != len(self.times) - 1:
            raise ContractViolationError("need exactly one input per interval")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ContractViolationError("times must be strictly increasing")

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t1(self) -> float:
        return float(self.times[-1])

    @property
    def duration(self) -> float:
        return self.t1 - self.t0

    def state_at(self, t):
        """Linear interpolation of the state, clamped to the time span."""
        t = np.clip(t, self.t0, self.t1)
        out = np.empty(np.shape(t) + (self.states.shape[1],))
        for i in range(self.states.shape[1]):
            out[..., i] = np.interp(t, self.times, self.states[:, i])
        return out

    def input_at(self, t):
        """Piecewise-constant input lookup, clamped to the last interval."""
        idx = np.searchsorted(self.times, t, side="right") - 1
        idx = np.clip(idx, 0, len(self.inputs) - 1)
        return self.inputs[idx]

    def shifted(self, t0: float) -> "Trajectory":
        """Same trajectory re-anchored to start at absolute time t0."""
        return Trajectory(self.times - self.times[0] + t0, self.states, self.inputs, tag=self.tag)

    def restrict(self, duration: float) -> "Trajectory":
        """Initial segment covering [t0, t0 + duration], grid-aligned."""
        n_steps = int(round(duration / (self.times[1] - self.times[0])))
        n_steps = min(max(n_steps, 1), len(self.inputs))
        return Trajectory(
            self.times[: n_steps + 1].copy(),
            self.states[: n_steps + 1].copy(),
            self.inputs[:n_steps].copy(),
            tag=self.tag,
        )


@dataclass
class RegressionTuple:
    """One integral-regression sample: Y = Fmat @ theta + integrated noise."""

    Y: np.ndarray
    Fmat: np.ndarray
    window: tuple | None = None

    def __post_init__(self):
        self.Y = np.asarray(self.Y, dtype=float)
        self.Fmat = np.atleast_2d(np.asarray(self.Fmat, dtype=float))


def eval_dynamics(model: ModelSpec, x, u, theta, w):
    """State rate f0(x) + Phi(x,u) @ theta + g0(x) @ u + w for a single state."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    theta = np.asarray(theta, dtype=float)
    w = np.asarray(w, dtype=float)
    if x.shape[-1] != model.state_dim or u.shape[-1] != model.input_dim:
        raise ContractViolationError("state/input dimension mismatch")
    if theta.shape[-1] != model.param_dim or w.shape[-1] != model.state_dim:
        raise ContractViolationError("theta/disturbance dimension mismatch")
    return dynamics_rate(model, x, u, theta, w)


def dynamics_rate(model: ModelSpec, x, u, theta, w):
    """Batched state rate; no argument checking (hot path)."""
    if model.rate is not None:
        return model.rate(x, u, theta, w)
    drift = model.f0(x) + np.einsum("...np,...p->...n", model.regressor(x, u), theta)
    return drift + np.einsum("...nm,...m->...n", model.g0(x), u) + w


def integrate_step(model: ModelSpec, x, u, theta, w, dt: float):
    """Classic RK4 step with u and w held constant over the step."""
    if dt <= 0:
        raise ContractViolationError("dt must be positive")
    k1 = dynamics_rate(model, x, u, theta, w)
    k2 = dynamics_rate(model, x + 0.5 * dt * k1, u, theta, w)
    k3 = dynamics_rate(model, x + 0.5 * dt * k2, u, theta, w)
    k4 = dynamics_rate(model, x + dt * k3, u, theta, w)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NumericalBlowupError("non-finite state after integration step")
    return out


def _rk4_step_unchecked(model, x, u, theta, w, dt):
    k1 = dynamics_rate(model, x, u, theta, w)
    k2 = dynamics_rate(model, x + 0.5 * dt * k1, u, theta, w)
    k3 = dynamics_rate(model, x + 0.5 * dt * k2, u, theta, w)
    k4 = dynamics_rate(model, x + dt * k3, u, theta, w)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def sample_disturbances(model: ModelSpec, n_steps: int, rng: np.random.Generator, batch=None):
    """Per-step disturbances drawn uniformly from [-wbar, wbar]^n."""
    wb = model.disturbance_bound
    shape = (n_steps, model.state_dim) if batch is None else (batch, n_steps, model.state_dim)
    if wb == 0.0:
        return np.zeros(shape)
    return rng.uniform(-wb, wb, size=shape)


def simulate_closed_loop(
    model: ModelSpec,
    policy: Callable[[float, np.ndarray], np.ndarray],
    x0,
    t_span,
    theta,
    disturbance_seed,
    dt: float = DEFAULT_DT,
    tag: str = "executed",
    truncate_on_blowup: bool = False,
) -> Trajectory:
    """Simulate policy (t, x) -> u from x0 over t_span = (t0, t1).

    Inputs are clipped to the model input box before application; the
    disturbance is redrawn every step from the seeded generator, so the
    result is a deterministic function of the arguments.  A numerical
    blowup raises, or truncates the trajectory at the last finite state
    when truncate_on_blowup is set.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    n_steps = max(1, int(round((t1 - t0) / dt)))
    rng = np.random.default_rng(disturbance_seed)
    w_seq = sample_disturbances(model, n_steps, rng)
    theta = np.asarray(theta, dtype=float)

    times = t0 + dt * np.arange(n_steps + 1)
    states = np.empty((n_steps + 1, model.state_dim))
    inputs = np.empty((n_steps, model.input_dim))
    states[0] = np.asarray(x0, dtype=float)
    stop = n_steps
    for j in range(n_steps):
        u = np.asarray(policy(times[j], states[j]), dtype=float)
        if not np.all(np.isfinite(u)):
            raise PolicyFailureError(f"policy returned non-finite input at t={times[j]:.3f}")
        u = model.input_bounds.clip(u)
        inputs[j] = u
        try:
            states[j + 1] = integrate_step(model, states[j], u, theta, w_seq[j], dt)
        except NumericalBlowupError:
            if not truncate_on_blowup:
                raise
            stop = j
            break
        if np.max(np.abs(states[j + 1])) > 1e9:
            if not truncate_on_blowup:
                raise NumericalBlowupError("state magnitude exceeded 1e9")
            stop = j
            break
    if stop < n_steps:
        return Trajectory(times[: stop + 1], states[: stop + 1], inputs[:stop], tag=tag)
    return Trajectory(times, states, inputs, tag=tag)


def rollout_batch(model: ModelSpec, policy, x0, n_steps: int, dt: float, thetas, w_seqs):
    """Simulate a batch of closed-loop rollouts sharing one policy.

    Args:
        policy: batched feedback law, (t, X[B, n]) -> U[B, m].
        x0: (n,) or (B, n) initial states.
        thetas: (B, p) per-rollout parameter draws.
        w_seqs: (B, n_steps, n) per-rollout disturbance sequences.

    Returns:
        (times[T+1], states[B, T+1, n], inputs[B, T, m], alive[B]) where
        alive marks rollouts that stayed finite; diverged rollouts are
        frozen at their last finite state.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    B = thetas.shape[0]
    x = np.broadcast_to(np.asarray(x0, dtype=float), (B, model.state_dim)).copy()
    times = dt * np.arange(n_steps + 1)
    states = np.empty((B, n_steps + 1, model.state_dim))
    inputs = np.zeros((B, n_steps, model.input_dim))
    alive = np.ones(B, dtype=bool)
    states[:, 0] = x
    for j in range(n_steps):
        u = model.input_bounds.clip(np.asarray(policy(times[j], x), dtype=float))
        x_next = _rk4_step_unchecked(model, x, u, thetas, w_seqs[:, j], dt)
        ok = np.all(np.isfinite(x_next), axis=-1) & (np.max(np.abs(x_next), axis=-1) < 1e9)
        alive &= ok
        x = np.where(alive[:, None], x_next, x)
        inputs[:, j] = u
        states[:, j + 1] = x
    return times, states, inputs, alive


def _drift_integrand(model: ModelSpec, states, inputs):
    """f0 + g0 u evaluated at interval endpoints with the interval's input."""
    gl = np.einsum("tnm,tm->tn", model.g0(states[:-1]), inputs)
    gr = np.einsum("tnm,tm->tn", model.g0(states[1:]), inputs)
    return model.f0(states[:-1]) + gl, model.f0(states[1:]) + gr


def make_regression_tuple(model: ModelSpec, traj: Trajectory, t: float, window: float) -> RegressionTuple:
    """Integral-regression tuple on [t - window, t].

    Y = x(t) - x(t - window) - int(f0 + g0 u) and Fmat = int(Phi), both by
    the trapezoid rule on the trajectory grid, honoring the
    piecewise-constant input on each interval.
    """
    dt = float(traj.times[1] - traj.times[0])
    if window <= 0 or abs(window / dt - round(window / dt)) > 1e-9:
        raise ContractViolationError("window must be a positive multiple of dt")
    i1 = int(round((t - traj.t0) / dt))
    i0 = i1 - int(round(window / dt))
    if i0 < 0 or i1 > len(traj.inputs) or abs(traj.t0 + i1 * dt - t) > 1e-9:
        raise InsufficientDataError("trajectory does not cover the requested window")

    xs = traj.states[i0 : i1 + 1]
    us = traj.inputs[i0:i1]
    dl, dr = _drift_integrand(model, xs, us)
    drift_int = 0.5 * dt * np.sum(dl + dr, axis=0)
    phi_l = model.regressor(xs[:-1], us)
    phi_r = model.regressor(xs[1:], us)
    fmat = 0.5 * dt * np.sum(phi_l + phi_r, axis=0)
    y = xs[-1] - xs[0] - drift_int
    return RegressionTuple(y, fmat, window=(t - window, t))


def collect_regression_tuples(model: ModelSpec, traj: Trajectory, window: float):
    """All tuples on consecutive non-overlapping windows of the trajectory."""
    dt = float(traj.times[1] - traj.times[0])
    steps = int(round(window / dt))
    out = []
    for i1 in range(steps, len(traj.inputs) + 1, steps):
        t = traj.t0 + i1 * dt
        out.append(make_regression_tuple(model, traj, t, window))
    return out


def _quad_f0(x):
    out = np.zeros_like(x)
    out[..., :3] = x[..., 3:]
    out[..., 3:] = GRAVITY
    return out


def _quad_g0(x):
    g = np.zeros(x.shape[:-1] + (6, 3))
    g[..., 3, 0] = 1.0
    g[..., 4, 1] = 1.0
    g[..., 5, 2] = 1.0
    return g


def drag_quadrotor(
    true_cd: float = 0.3,
    wbar: float = 0.05,
    pos_lo=(-1.0, -2.0, 0.2),
    pos_hi=(9.5, 2.0, 2.5),
    v_max: float = 4.0,
    u_xy: float = 6.0,
    u_z: float = 6.0,
) -> ModelSpec:
    """Point-mass quadrotor with scalar quadratic drag: a = -cd*|v|*v + g + u."""

    def phi(x, u):
        v = x[..., 3:]
        speed = np.linalg.norm(v, axis=-1, keepdims=True)
        col = np.concatenate([np.zeros_like(v), -speed * v], axis=-1)
        return col[..., None]

    def rate(x, u, theta, w):
        v = x[..., 3:]
        speed = np.sqrt(np.sum(v * v, axis=-1))[..., None]
        out = np.empty(np.broadcast_shapes(x.shape), dtype=float)
        out[..., :3] = v
        out[..., 3:] = GRAVITY + u - theta[..., 0:1] * speed * v
        return out + w

    state_box = Box(list(pos_lo) + [-v_max] * 3, list(pos_hi) + [v_max] * 3)
    input_box = Box([-u_xy, -u_xy, 9.81 - u_z], [u_xy, u_xy, 9.81 + u_z])
    return ModelSpec(
        name="drag_quad",
        state_dim=6,
        input_dim=3,
        param_dim=1,
        f0=_quad_f0,
        g0=_quad_g0,
        regressor=phi,
        true_theta=np.array([true_cd]),
        disturbance_bound=wbar,
        state_bounds=state_box,
        input_bounds=input_box,
        rate=rate,
    )


def vector_drag_quadrotor(
    true_cd1: float = 0.2,
    true_cd2: float = 0.35,
    wbar: float = 0.05,
    pos_lo=(-1.0, -2.0, 0.2),
    pos_hi=(9.5, 2.0, 2.5),
    v_max: float = 4.0,
    u_xy: float = 6.0,
    u_z: float = 6.0,
) -> ModelSpec:
    """Quadrotor with linear plus quadratic drag: a = -c1*v - c2*|v|*v + g + u."""

    def phi(x, u):
        v = x[..., 3:]
        speed = np.linalg.norm(v, axis=-1, keepdims=True)
        zeros = np.zeros_like(v)
        col1 = np.concatenate([zeros, -v], axis=-1)
        col2 = np.concatenate([zeros, -speed * v], axis=-1)
        return np.stack([col1, col2], axis=-1)

    def rate(x, u, theta, w):
        v = x[..., 3:]
        speed = np.sqrt(np.sum(v * v, axis=-1))[..., None]
        out = np.empty(np.broadcast_shapes(x.shape), dtype=float)
        out[..., :3] = v
        out[..., 3:] = GRAVITY + u - theta[..., 0:1] * v - theta[..., 1:2] * speed * v
        return out + w

    state_box = Box(list(pos_lo) + [-v_max] * 3, list(pos_hi) + [v_max] * 3)
    input_box = Box([-u_xy, -u_xy, 9.81 - u_z], [u_xy, u_xy, 9.81 + u_z])
    return ModelSpec(
        name="vector_drag_quad",
        state_dim=6,
        input_dim=3,
        param_dim=2,
        f0=_quad_f0,
        g0=_quad_g0,
        regressor=phi,
        true_theta=np.array([true_cd1, true_cd2]),
        disturbance_bound=wbar,
        state_bounds=state_box,
        input_bounds=input_box,
        rate=rate,
    )
