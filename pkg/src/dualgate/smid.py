"""Set-membership identification over axis-aligned parameter boxes.

The feasible parameter set is a hyperrectangle refined by linear programs
from stored integral-regression tuples: every stored tuple (Y, F) pins the
parameter to the slab -eps <= Y - F theta <= eps, and the box update
minimizes/maximizes each coordinate over the intersection of all slabs
with the previous box.  Updates are nested by construction and never
empty: an infeasible constraint system (miscalibrated eps) leaves the box
unchanged and logs a warning.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolationError
from .linprog import LinearProgram, LPStatus, solve_lp
from .models import ModelSpec, RegressionTuple, Trajectory, collect_regression_tuples, integrate_step

log = logging.getLogger(__name__)

_ZERO_ROW = 1e-12


@dataclass
class ParameterBox:
    """Hyperrectangle [lo, hi] of parameters consistent with the data so far."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if self.lo.shape != self.hi.shape or np.any(self.lo > self.hi):
            raise ContractViolationError("parameter box needs lo <= hi")

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def contains(self, theta, tol: float = 0.0) -> bool:
        theta = np.asarray(theta)
        return bool(np.all(theta >= self.lo - tol) and np.all(theta <= self.hi + tol))

    def contains_box(self, other: "ParameterBox", tol: float = 1e-9) -> bool:
        return bool(np.all(other.lo >= self.lo - tol) and np.all(other.hi <= self.hi + tol))

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        shape = (self.dim,) if size is None else (size, self.dim)
        return rng.uniform(self.lo, self.hi, size=shape)

    def copy(self) -> "ParameterBox":
        return ParameterBox(self.lo.copy(), self.hi.copy())


@dataclass
class DirectionSet:
    """Unit directions along which widths are tracked."""

    dirs: list = field(default_factory=list)

    def __post_init__(self):
        self.dirs = [np.asarray(d, dtype=float) for d in self.dirs]
        for d in self.dirs:
            if abs(np.linalg.norm(d) - 1.0) > 1e-9:
                raise ContractViolationError("directions must be unit vectors")

    @staticmethod
    def axes(p: int) -> "DirectionSet":
        return DirectionSet(list(np.eye(p)))

    def __len__(self):
        return len(self.dirs)

    def __iter__(self):
        return iter(self.dirs)


@dataclass
class HistoryStack:
    """Bounded buffer of informative regression tuples.

    A tuple is admitted only when it raises the minimum eigenvalue of the
    stacked Gram matrix sum(F.T @ F) by at least admission_threshold (or
    the stack is below min_fill); at capacity it may replace the stored
    tuple whose removal hurts the Gram spectrum least.
    """

    capacity: int = 50
    admission_threshold: float = 1e-4
    min_fill: int = 1
    tuples: list = field(default_factory=list)

    def __len__(self):
        return len(self.tuples)

    def gram(self, param_dim: int | None = None) -> np.ndarray:
        if not self.tuples:
            p = param_dim if param_dim is not None else 1
            return np.zeros((p, p))
        p = self.tuples[0].Fmat.shape[1]
        g = np.zeros((p, p))
        for t in self.tuples:
            g += t.Fmat.T @ t.Fmat
        return g

    def lambda_min(self, param_dim: int | None = None) -> float:
        return float(np.linalg.eigvalsh(self.gram(param_dim))[0])


def try_admit(stack: HistoryStack, tup: RegressionTuple) -> bool:
    """Admit a tuple if it adds enough excitation; returns True on admission."""
    if not np.all(np.isfinite(tup.Y)) or not np.all(np.isfinite(tup.Fmat)):
        return False
    if len(stack) < stack.min_fill:
        stack.tuples.append(tup)
        return True
    base = stack.lambda_min()
    add = tup.Fmat.T @ tup.Fmat
    if len(stack) < stack.capacity:
        gain = float(np.linalg.eigvalsh(stack.gram() + add)[0]) - base
        if gain >= stack.admission_threshold:
            stack.tuples.append(tup)
            return True
        return False
    # At capacity: replace the tuple whose removal costs the least.
    gram = stack.gram()
    best_val, best_j = -np.inf, -1
    for j, old in enumerate(stack.tuples):
        val = float(np.linalg.eigvalsh(gram - old.Fmat.T @ old.Fmat + add)[0])
        if val > best_val:
            best_val, best_j = val, j
    if best_val - base >= stack.admission_threshold:
        stack.tuples[best_j] = tup
        return True
    return False


def check_fe(stack: HistoryStack, lambda_fe: float) -> bool:
    """Finite-excitation test: lambda_min of the stacked Gram >= lambda_fe."""
    if lambda_fe <= 0:
        raise ContractViolationError("lambda_fe must be positive")
    if not stack.tuples:
        return False
    return stack.lambda_min() >= lambda_fe


def _scalar_bounds(stack: HistoryStack, box: ParameterBox, eps: float):
    """Exact interval intersection for p = 1; equals the LP optimum."""
    lo, hi = float(box.lo[0]), float(box.hi[0])
    for tup in stack.tuples:
        f = tup.Fmat[:, 0]
        y = tup.Y
        strong = np.abs(f) > _ZERO_ROW
        if np.any(~strong & (np.abs(y) > eps)):
            return None
        fs, ys = f[strong], y[strong]
        if fs.size == 0:
            continue
        lo_cand = np.where(fs > 0, (ys - eps) / fs, (ys + eps) / fs)
        hi_cand = np.where(fs > 0, (ys + eps) / fs, (ys - eps) / fs)
        lo = max(lo, float(np.max(lo_cand)))
        hi = min(hi, float(np.min(hi_cand)))
    if lo > hi:
        return None
    return np.array([lo]), np.array([hi])


def smid_update(box: ParameterBox, stack: HistoryStack, eps: float) -> ParameterBox:
    """Refit per-coordinate bounds against all stored tuples.

    Solves min/max theta_i subject to -eps <= Y_j - F_j theta <= eps for
    every stored tuple and theta inside the current box.  Returns the old
    box unchanged when the constraints are jointly infeasible, which
    signals a miscalibrated eps.
    """
    if eps <= 0:
        raise ContractViolationError("eps must be positive")
    if not stack.tuples:
        return box.copy()

    p = box.dim
    if p == 1:
        res = _scalar_bounds(stack, box, eps)
        if res is None:
            log.warning("SMID constraint system infeasible; keeping previous box")
            return box.copy()
        lo, hi = res
        return ParameterBox(np.maximum(lo, box.lo), np.minimum(hi, box.hi))

    F = np.vstack([t.Fmat for t in stack.tuples])
    Y = np.concatenate([t.Y for t in stack.tuples])
    A_ub = np.vstack([F, -F])
    b_ub = np.concatenate([Y + eps, eps - Y])
    lo = np.empty(p)
    hi = np.empty(p)
    for i in range(p):
        c = np.zeros(p)
        c[i] = 1.0
        low = solve_lp(LinearProgram(c, A_ub=A_ub, b_ub=b_ub, lo=box.lo, hi=box.hi))
        high = solve_lp(LinearProgram(-c, A_ub=A_ub, b_ub=b_ub, lo=box.lo, hi=box.hi))
        if low.status is not LPStatus.OPTIMAL or high.status is not LPStatus.OPTIMAL:
            log.warning("SMID constraint system infeasible; keeping previous box")
            return box.copy()
        lo[i] = low.value
        hi[i] = -high.value
    lo = np.maximum(lo, box.lo)
    hi = np.minimum(hi, box.hi)
    return ParameterBox(lo, np.maximum(hi, lo))


def width(box: ParameterBox, d: np.ndarray) -> float:
    """Directional width sup d.theta - inf d.theta = sum |d_i| (hi - lo)."""
    d = np.asarray(d, dtype=float)
    if abs(np.linalg.norm(d) - 1.0) > 1e-9:
        raise ContractViolationError("direction must be a unit vector")
    return float(np.abs(d) @ (box.hi - box.lo))


def avg_width_reduction(before: ParameterBox, after: ParameterBox, dirs: DirectionSet) -> float:
    """Mean over directions of the width drop from before to after."""
    if not before.contains_box(after):
        raise ContractViolationError("after must be contained in before")
    total = sum(width(before, d) - width(after, d) for d in dirs)
    return total / len(dirs)


def calibrate_eps(
    model: ModelSpec,
    window: float,
    dt: float,
    probe_inputs: np.ndarray | None = None,
    x0=None,
    duration: float = 4.0,
    refine: int = 10,
    safety: float = 3.0,
    seed: int = 0,
    theta: np.ndarray | None = None,
) -> float:
    """Slack for the SMID constraints: disturbance bound plus quadrature margin.

    eps = wbar * window * sqrt(n) + c_quad * dt^2.  The margin constant is
    measured once per model from a noise-free probe run on the production
    grid (inputs held for dt, as executed): c_quad bounds both the direct
    regression residual |Y - F theta| of the probe tuples and the change
    when the quadrature grid is refined ten-fold, scaled by a safety
    factor.
    """
    rng = np.random.default_rng(seed)
    theta = model.true_theta if theta is None else np.asarray(theta, dtype=float)
    if x0 is None:
        x0 = 0.5 * (model.state_bounds.lo + model.state_bounds.hi)
    if probe_inputs is None:
        knot_steps = max(1, int(round(0.2 / dt)))
        n_steps = int(round(duration / dt))
        knots = model.input_bounds.sample(rng, n_steps // knot_steps + 1)
        probe_inputs = np.repeat(knots, knot_steps, axis=0)[:n_steps]
    probe_inputs = np.asarray(probe_inputs, dtype=float)
    n_steps = len(probe_inputs)

    zero_w = np.zeros(model.state_dim)
    coarse_states = np.empty((n_steps + 1, model.state_dim))
    coarse_states[0] = np.asarray(x0, dtype=float)
    for j in range(n_steps):
        coarse_states[j + 1] = integrate_step(model, coarse_states[j], probe_inputs[j],
                                              theta, zero_w, dt)
    coarse = Trajectory(dt * np.arange(n_steps + 1), coarse_states, probe_inputs)

    fine_dt = dt / refine
    x = np.asarray(x0, dtype=float)
    fine_states = np.empty((n_steps * refine + 1, model.state_dim))
    fine_states[0] = x
    for j in range(n_steps * refine):
        x = integrate_step(model, x, probe_inputs[j // refine], theta, zero_w, fine_dt)
        fine_states[j + 1] = x
    fine = Trajectory(fine_dt * np.arange(n_steps * refine + 1), fine_states,
                      np.repeat(probe_inputs, refine, axis=0))

    worst = 0.0
    for tc in collect_regression_tuples(model, coarse, window):
        worst = max(worst, float(np.max(np.abs(tc.Y - tc.Fmat @ theta))))
    for tf, tr in zip(collect_regression_tuples(model, fine, window),
                      collect_regression_tuples(model,
                                                Trajectory(fine.times[::refine],
                                                           fine.states[::refine],
                                                           probe_inputs), window)):
        worst = max(worst, float(np.max(np.abs(tr.Y - tf.Y))))
        worst = max(worst, float(np.max(np.abs((tr.Fmat - tf.Fmat) @ theta))))
    c_quad = safety * worst / dt**2
    n = model.state_dim
    return model.disturbance_bound * window * float(np.sqrt(n)) + c_quad * dt**2
