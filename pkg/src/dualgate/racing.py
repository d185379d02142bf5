"""Car racing domain: dynamic bicycle model with Pacejka tires and a track.

State: x = [px, py, psi, vx, vy, omega, delta] (global position, yaw,
body-frame velocities, yaw rate, steering angle).
Input: u = [Fd, Fb, ddelta_cmd] (drive force >= 0, brake force <= 0,
steering rate).  The tire friction coefficient mu scales the lateral
forces only and is the single uncertain parameter.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolationError
from .models import Box, ModelSpec

try:
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a soft dependency
    _HAVE_NUMBA = False

@dataclass(frozen=True)
class CarParams:
    """1:10-scale car parameters.

    Tire stiffness (B, C) and the slip regularizer eps_reg are chosen so
    the lateral dynamics stay well inside the RK4 stability region at the
    simulation step for every friction value in mu bounds.
    """

    m: float = 3.5
    l_f: float = 0.16
    l_r: float = 0.16
    J_z: float = 0.06
    B_f: float = 2.5
    C_f: float = 1.3
    B_r: float = 2.5
    C_r: float = 1.3
    rho: float = 1.225
    A_front: float = 0.03
    c_d_aero: float = 0.8
    k_d: float = 0.0
    k_b: float = 0.6
    f_r: float = 0.01
    eps_reg: float = 0.6
    mu_lo: float = 0.2
    mu_hi: float = 2.0

    def __post_init__(self):
        if self.l_f <= 0 or self.l_r <= 0:
            raise ContractViolationError("axle distances must be positive")
        if not (0.2 <= self.mu_lo <= self.mu_hi <= 2.0):
            raise ContractViolationError("mu bounds must lie in [0.2, 2.0]")

    @property
    def wheelbase(self) -> float:
        return self.l_f + self.l_r

    @property
    def load_front(self) -> float:
        return self.m * 9.81 * self.l_r / (2.0 * self.wheelbase)

    @property
    def load_rear(self) -> float:
        return self.m * 9.81 * self.l_f / (2.0 * self.wheelbase)


def _slip_angles(p: CarParams, x):
    vx, vy, omega, delta = x[..., 3], x[..., 4], x[..., 5], x[..., 6]
    den = vx + p.eps_reg
    den = np.where(np.abs(den) < 1e-6, 1e-6, den)
    alpha_f = delta - np.arctan((p.l_f * omega + vy) / den)
    alpha_r = np.arctan((p.l_r * omega - vy) / den)
    return alpha_f, alpha_r


def _lateral_force_shapes(p: CarParams, x):
    """Pacejka lateral forces with the friction coefficient factored out."""
    alpha_f, alpha_r = _slip_angles(p, x)
    fyf = p.load_front * np.sin(p.C_f * np.arctan(p.B_f * alpha_f))
    fyr = p.load_rear * np.sin(p.C_r * np.arctan(p.B_r * alpha_r))
    return fyf, fyr


def _longitudinal_forces(p: CarParams, u):
    fd, fb = u[..., 0], u[..., 1]
    g = 9.81
    fxf = 0.5 * p.k_d * fd + 0.5 * p.k_b * fb - 0.5 * p.f_r * p.m * g * p.l_r / p.wheelbase
    fxr = 0.5 * (1 - p.k_d) * fd + 0.5 * (1 - p.k_b) * fb - 0.5 * p.f_r * p.m * g * p.l_f / p.wheelbase
    return fxf, fxr


def car_dynamics(p: CarParams, x, u, mu, w=0.0):
    """Full state rate of the bicycle model; mu scales lateral tire forces."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    psi, vx, vy, omega, delta = (x[..., 2], x[..., 3], x[..., 4], x[..., 5], x[..., 6])
    fyf_bar, fyr_bar = _lateral_force_shapes(p, x)
    fyf, fyr = mu * fyf_bar, mu * fyr_bar
    fxf, fxr = _longitudinal_forces(p, u)
    cos_d, sin_d = np.cos(delta), np.sin(delta)

    out = np.empty_like(x)
    out[..., 0] = vx * np.cos(psi) - vy * np.sin(psi)
    out[..., 1] = vx * np.sin(psi) + vy * np.cos(psi)
    out[..., 2] = omega
    out[..., 3] = (2 * fxr + 2 * fxf * cos_d - 2 * fyf * sin_d) / p.m \
        - 0.5 * p.rho * p.A_front * p.c_d_aero * vx**2 + omega * vy
    out[..., 4] = (2 * fyr + 2 * fyf * cos_d + 2 * fxf * sin_d) / p.m - omega * vx
    out[..., 5] = (-2 * fyr * p.l_r + (2 * fyf * cos_d + 2 * fxf * sin_d) * p.l_f) / p.J_z
    out[..., 6] = u[..., 2]
    return out + w


def car_regressor(p: CarParams, x):
    """Friction regressor Phi(x): d(rate)/d(mu), nonzero only in vx, vy, omega."""
    x = np.asarray(x, dtype=float)
    delta = x[..., 6]
    fyf_bar, fyr_bar = _lateral_force_shapes(p, x)
    phi = np.zeros(x.shape[:-1] + (7, 1))
    phi[..., 3, 0] = -(2.0 / p.m) * np.sin(delta) * fyf_bar
    phi[..., 4, 0] = (2.0 / p.m) * (fyr_bar + np.cos(delta) * fyf_bar)
    phi[..., 5, 0] = (-2 * p.l_r * fyr_bar + 2 * p.l_f * np.cos(delta) * fyf_bar) / p.J_z
    return phi


def car_model(
    params: CarParams | None = None,
    true_mu: float = 0.9,
    wbar: float = 0.02,
    v_max: float = 10.0,
    delta_max: float = 0.45,
    fd_max: float = 14.0,
    fb_max: float = 20.0,
    ddelta_max: float = 3.5,
) -> ModelSpec:
    """ModelSpec wrapper around the bicycle dynamics (p = 1, theta = mu)."""
    p = params or CarParams()
    zero_u = np.zeros(3)

    def f0(x):
        u = np.broadcast_to(zero_u, x.shape[:-1] + (3,))
        return car_dynamics(p, x, u, mu=0.0)

    def g0(x):
        delta = x[..., 6]
        cos_d, sin_d = np.cos(delta), np.sin(delta)
        g = np.zeros(x.shape[:-1] + (7, 3))
        g[..., 3, 0] = ((1 - p.k_d) + p.k_d * cos_d) / p.m
        g[..., 3, 1] = ((1 - p.k_b) + p.k_b * cos_d) / p.m
        g[..., 4, 0] = p.k_d * sin_d / p.m
        g[..., 4, 1] = p.k_b * sin_d / p.m
        g[..., 5, 0] = p.k_d * sin_d * p.l_f / p.J_z
        g[..., 5, 1] = p.k_b * sin_d * p.l_f / p.J_z
        g[..., 6, 2] = 1.0
        return g

    def phi(x, u):
        return car_regressor(p, x)

    def rate(x, u, theta, w):
        return car_dynamics(p, x, u, theta[..., 0], w)

    big = 1e6
    state_box = Box(
        [-40.0, -40.0, -big, -0.5, -4.0, -6.0, -delta_max],
        [40.0, 40.0, big, v_max, 4.0, 6.0, delta_max],
    )
    input_box = Box([0.0, -fb_max, -ddelta_max], [fd_max, 0.0, ddelta_max])
    return ModelSpec(
        name="car",
        state_dim=7,
        input_dim=3,
        param_dim=1,
        f0=f0,
        g0=g0,
        regressor=phi,
        true_theta=np.array([true_mu]),
        disturbance_bound=wbar,
        state_bounds=state_box,
        input_bounds=input_box,
        rate=rate,
    )


def _sweep_impl(pos, wp, tangents, ds, length, hint0, window):
    """Windowed nearest-waypoint projection chained along the time axis."""
    B, T1 = pos.shape[0], pos.shape[1]
    n = wp.shape[0]
    s = np.empty((B, T1))
    ey = np.empty((B, T1))
    idx = np.empty((B, T1), np.int64)
    for b in range(B):
        h = hint0[b]
        for t in range(T1):
            px, py = pos[b, t, 0], pos[b, t, 1]
            best = h
            bestd = 1e30
            for o in range(-window, window + 1):
                j = (h + o) % n
                dx = px - wp[j, 0]
                dy = py - wp[j, 1]
                d = dx * dx + dy * dy
                if d < bestd:
                    bestd = d
                    best = j
            tx, ty = tangents[best, 0], tangents[best, 1]
            rx, ry = px - wp[best, 0], py - wp[best, 1]
            along = rx * tx + ry * ty
            if along < 0.0:
                along = 0.0
            elif along > ds:
                along = ds
            s[b, t] = (best * ds + along) % length
            ey[b, t] = -rx * ty + ry * tx
            idx[b, t] = best
            h = best
    return s, ey, idx


if _HAVE_NUMBA:
    _sweep_impl = _njit(cache=True)(_sweep_impl)


@dataclass
class Track:
    """Closed track as a densely resampled centerline with an arc-length table."""

    waypoints: np.ndarray
    half_width: float
    closed: bool = True
    ds: float = field(init=False)
    length: float = field(init=False)
    tangents: np.ndarray = field(init=False)
    headings: np.ndarray = field(init=False)

    def __post_init__(self):
        wp = np.asarray(self.waypoints, dtype=float)
        if wp.ndim != 2 or wp.shape[1] != 2 or len(wp) < 8:
            raise ContractViolationError("waypoints must be an (N, 2) polyline")
        self.waypoints = wp
        seg = np.roll(wp, -1, axis=0) - wp
        seg_len = np.linalg.norm(seg, axis=1)
        if np.any(seg_len < 1e-9):
            raise ContractViolationError("degenerate track segment")
        self.ds = float(np.mean(seg_len))
        self.length = float(np.sum(seg_len))
        self.tangents = seg / seg_len[:, None]
        self.headings = np.arctan2(self.tangents[:, 1], self.tangents[:, 0])

    @property
    def n(self) -> int:
        return len(self.waypoints)

    @property
    def min_radius(self) -> float:
        """Smallest turn radius along the centerline (from discrete curvature)."""
        return 1.0 / max(float(np.max(self.curvature())), 1e-9)

    def curvature(self) -> np.ndarray:
        """Per-waypoint unsigned curvature |d heading / d s| (cached)."""
        if not hasattr(self, "_curvature"):
            dpsi = np.abs(wrap_angle(np.diff(np.unwrap(self.headings), append=self.headings[:1]
                                             + 2 * np.pi * round((self.headings[-1]
                                                                  - self.headings[0])
                                                                 / (2 * np.pi)))))
            self._curvature = dpsi / self.ds
        return self._curvature

    def max_curvature_ahead(self, idx, dist: float) -> np.ndarray:
        """Max curvature within dist meters ahead of waypoint indices."""
        kappa = self.curvature()
        steps = max(1, int(round(dist / self.ds)))
        idx = np.asarray(idx)
        offs = np.arange(steps)
        window = kappa[(idx[..., None] + offs) % self.n]
        return np.max(window, axis=-1)

    def centerline_point(self, s):
        """Position on the centerline at arc length s (wrapped)."""
        s = np.mod(s, self.length)
        idx = np.minimum((s / self.ds).astype(int), self.n - 1)
        frac = (s - idx * self.ds) / self.ds
        base = self.waypoints[idx]
        return base + self.tangents[idx] * (frac * self.ds)[..., None]

    def project(self, pos, hint=None, window: int = 25):
        """Project positions onto the centerline.

        Args:
            pos: (..., 2) positions.
            hint: previous nearest waypoint indices (same batch shape) for a
                windowed search; None scans all waypoints.

        Returns:
            (s, e_y, idx): arc length, signed lateral offset (left of the
            direction of travel is positive), and nearest waypoint index.
        """
        pos = np.asarray(pos, dtype=float)
        flat = pos.reshape(-1, 2)
        if hint is None:
            d2 = np.sum((flat[:, None, :] - self.waypoints[None]) ** 2, axis=-1)
            idx = np.argmin(d2, axis=1)
            base = self.waypoints[idx]
            tang = self.tangents[idx]
            rel = flat - base
            along = np.clip(np.sum(rel * tang, axis=-1), 0.0, self.ds)
            e_y = rel[:, 0] * (-tang[:, 1]) + rel[:, 1] * tang[:, 0]
            s = np.mod(idx * self.ds + along, self.length)
        else:
            hint_flat = np.asarray(hint, dtype=np.int64).reshape(-1)
            s, e_y, idx = _sweep_impl(flat[:, None, :], self.waypoints, self.tangents,
                                      self.ds, self.length, hint_flat, window)
            s, e_y, idx = s[:, 0], e_y[:, 0], idx[:, 0]
        shape = pos.shape[:-1]
        return s.reshape(shape), e_y.reshape(shape), idx.reshape(shape)

    def sweep(self, pos, hint0=None, window: int = 25):
        """Chained projection along rollouts: pos (B, T, 2) -> (s, e_y, idx)."""
        pos = np.ascontiguousarray(pos, dtype=float)
        if hint0 is None:
            _, _, hint0 = self.project(pos[:, 0])
        hint0 = np.asarray(hint0, dtype=np.int64).reshape(-1)
        return _sweep_impl(pos, self.waypoints, self.tangents, self.ds, self.length,
                           hint0, window)

    def heading_at(self, idx):
        return self.headings[np.asarray(idx)]


def track_frame(track: Track, state, hint=None):
    """Track-frame coordinates of a car state: progress, lateral, heading error."""
    state = np.asarray(state, dtype=float)
    s, e_y, idx = track.project(state[..., :2], hint=hint)
    e_psi = wrap_angle(state[..., 2] - track.heading_at(idx))
    return s, e_y, e_psi, idx


def wrap_angle(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def stadium_track(straight: float = 15.0, radius: float = 6.0, half_width: float = 1.5,
                  ds: float = 0.1) -> Track:
    """Benchmark closed track: two straights joined by semicircular ends."""
    pts = []
    n_str = int(round(straight / ds))
    n_arc = int(round(np.pi * radius / ds))
    half = straight / 2.0
    for i in range(n_str):
        pts.append((-half + straight * i / n_str, -radius))
    for i in range(n_arc):
        a = -np.pi / 2 + np.pi * i / n_arc
        pts.append((half + radius * np.cos(a), radius * np.sin(a)))
    for i in range(n_str):
        pts.append((half - straight * i / n_str, radius))
    for i in range(n_arc):
        a = np.pi / 2 + np.pi * i / n_arc
        pts.append((-half + radius * np.cos(a), radius * np.sin(a)))
    return Track(np.array(pts), half_width=half_width)
