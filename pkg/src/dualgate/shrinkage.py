"""Pre-commit prediction of uncertainty-set shrinkage.

Two predictors: parallel closed-loop rollouts (sample parameters and
disturbances, simulate the candidate, run the set-membership update on a
copy of the box, average the width reductions), and a data-consistency
bound that upper-bounds the post-execution width directly from the planned
regressor stack via an l1-minimization dual, with no simulation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolationError
from .linprog import LPStatus, min_l1_preimage
from .models import ModelSpec, Trajectory, collect_regression_tuples, rollout_batch, sample_disturbances
from .smid import (
    DirectionSet,
    HistoryStack,
    ParameterBox,
    avg_width_reduction,
    smid_update,
    try_admit,
    width,
)


@dataclass
class ShrinkagePrediction:
    delta_xi: float
    per_rollout: list = field(default_factory=list)
    method: str = "rollout"
    n_failed: int = 0


@dataclass
class StackedRegressor:
    """Regressor rows stacked from planned trajectory samples: (M, p)."""

    Amat: np.ndarray

    def __post_init__(self):
        self.Amat = np.atleast_2d(np.asarray(self.Amat, dtype=float))


def predict_rollout(
    model: ModelSpec,
    candidate_policy,
    x_k,
    box: ParameterBox,
    dirs: DirectionSet,
    n_rollouts: int,
    seed,
    horizon: float,
    window: float,
    eps: float,
    dt: float = 0.02,
    stack_capacity: int = 50,
    admission_threshold: float = 1e-4,
    quantile: float | None = None,
) -> ShrinkagePrediction:
    """Predicted average width reduction from simulated candidate executions.

    Each rollout draws theta uniformly from the box and a fresh disturbance
    sequence, simulates the candidate policy, rebuilds regression tuples on
    consecutive windows, and runs the set-membership update on a copy of
    the box.  A diverged rollout contributes zero reduction and is counted
    in n_failed.  The prediction is the mean unless a quantile is requested.
    """
    if n_rollouts < 1:
        raise ContractViolationError("need at least one rollout")
    rng = np.random.default_rng(seed)
    n_steps = max(1, int(round(horizon / dt)))
    thetas = box.sample(rng, n_rollouts)
    w_seqs = sample_disturbances(model, n_steps, rng, batch=n_rollouts)
    times, states, inputs, alive = rollout_batch(
        model, candidate_policy, x_k, n_steps, dt, thetas, w_seqs)

    per = np.zeros(n_rollouts)
    n_failed = 0
    for ell in range(n_rollouts):
        if not alive[ell]:
            n_failed += 1
            continue
        traj = Trajectory(times, states[ell], inputs[ell])
        stack = HistoryStack(capacity=stack_capacity, admission_threshold=admission_threshold)
        for tup in collect_regression_tuples(model, traj, window):
            try_admit(stack, tup)
        post = smid_update(box, stack, eps)
        per[ell] = avg_width_reduction(box, post, dirs)

    if quantile is None:
        delta = float(np.mean(per))
    else:
        delta = float(np.quantile(per, quantile))
    return ShrinkagePrediction(delta, per_rollout=per.tolist(), method="rollout", n_failed=n_failed)


def stack_regressor(model: ModelSpec, planned: Trajectory, sample_stride: int = 5) -> StackedRegressor:
    """Stack regressor rows Phi(x_j, u_j) over strided plan samples."""
    if sample_stride < 1:
        raise ContractViolationError("stride must be >= 1")
    if len(planned.inputs) == 0:
        raise ContractViolationError("empty trajectory")
    rows = []
    for j in range(0, len(planned.inputs), sample_stride):
        rows.append(model.regressor(planned.states[j], planned.inputs[j]))
    return StackedRegressor(np.vstack(rows))


def predict_consistency(
    stacked: StackedRegressor,
    wbar: float,
    box: ParameterBox,
    dirs: DirectionSet,
) -> ShrinkagePrediction:
    """Width bound from data consistency: w_d+ = min(w_d, 2 h(d)).

    h(d) = 2 * wbar * min{||lam||_1 : A.T lam = d} is the support function
    of the set of parameter offsets indistinguishable from the truth under
    the planned regressor stack; an infeasible direction predicts no
    reduction.  Tracking error is ignored by construction.
    """
    if wbar < 0:
        raise ContractViolationError("wbar must be nonnegative")
    total = 0.0
    for d in dirs:
        res = min_l1_preimage(stacked.Amat, d)
        h = 2.0 * wbar * res.l1 if res.status is LPStatus.OPTIMAL else np.inf
        w_now = width(box, d)
        w_plus = min(w_now, 2.0 * h)
        total += w_now - w_plus
    return ShrinkagePrediction(total / len(dirs), per_rollout=[], method="consistency")


def consistency_width_bound(stacked: StackedRegressor, wbar: float, d) -> float:
    """2 h(d): predicted width of the indistinguishable-offset set along d."""
    res = min_l1_preimage(stacked.Amat, d)
    if res.status is not LPStatus.OPTIMAL:
        return np.inf
    return 4.0 * wbar * res.l1
