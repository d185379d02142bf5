"""Dual-control core: candidate generation, scoring, budget accounting,
commitment, and the receding-horizon mission loops.

Each replanning epoch builds a conservative policy segment (restriction of
the robust backup, or the verified nominal in the racing instantiation)
and a set of informative candidates over horizons i * T_c capped at the
backup horizon.  Valid candidates are scored by predicted uncertainty
reduction discounted by horizon length; the best one whose predicted
excess cost fits the remaining exploration budget is committed, otherwise
the shortest conservative segment runs.  Executed data feed the
set-membership identifier between epochs, so uncertainty only shrinks.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolationError, PlanningFailureError
from .models import ModelSpec, Trajectory, collect_regression_tuples, simulate_closed_loop
from .planners import (
    AncillaryGains,
    CEMConfig,
    InfoObjective,
    PursuitParams,
    QuadMissionObjective,
    RacingObjective,
    TubeConfig,
    corner_speed_cap,
    cost_of_trajectory,
    guidance_inputs,
    plan_backup,
    plan_informative_segment,
    plan_nominal_racing,
    pursuit_policy,
    race_guidance_inputs,
    racing_stage_cost_fn,
    switched_policy,
    tracking_policy,
)
from .shrinkage import predict_consistency, predict_rollout, stack_regressor
from .smid import DirectionSet, HistoryStack, ParameterBox, smid_update, try_admit, width
from .verify import FallbackSpec, verify_rollouts, verify_tube_candidate
from .worlds import QuadWorld, RaceWorld

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Commit-rule primitives


@dataclass
class EngineConfig:
    T_c: float = 2.0
    lambda_discount: float = 0.1
    n_shrinkage_rollouts: int = 20
    predictor: str = "rollout"  # or "consistency"
    shrinkage_quantile: float | None = None
    n_verify: int = 200
    delta: float = 0.05
    window: float = 0.4
    dt: float = 0.02
    cost_aggregate: str = "mean"  # or "worst"
    max_candidates: int | None = None
    max_epochs: int = 400

    def __post_init__(self):
        if self.T_c <= 0 or self.lambda_discount <= 0:
            raise ContractViolationError("T_c and lambda must be positive")


@dataclass
class CandidateRecord:
    index: int
    horizon: float
    informative_traj: Trajectory | None = None
    conservative_traj: Trajectory | None = None
    valid: bool = False
    p_safe: float = 0.0
    p_safe_cons: float = 1.0
    cons_ok: bool = True
    predicted_cost_info: float = 0.0
    predicted_cost_cons: float = 0.0
    delta_xi: float = 0.0
    score: float = 0.0
    exploration_cost: float = 0.0
    budget_feasible: bool = False


@dataclass
class BudgetLedger:
    budget: float
    spent: float = 0.0
    per_epoch: list = field(default_factory=list)

    def charge(self, t_k: float, amount: float):
        if amount < -1e-12:
            raise ContractViolationError("exploration cost cannot be negative")
        amount = max(amount, 0.0)
        if self.spent + amount > self.budget + 1e-9:
            raise ContractViolationError("ledger overflow: commit exceeded the budget")
        self.spent = min(self.spent + amount, self.budget)
        self.per_epoch.append((t_k, amount))


def candidate_horizons(T_B: float, T_c: float) -> list:
    """Candidate horizon lengths {min(i*T_c, T_B)}, deduplicated, ascending."""
    if T_B <= 0 or T_c <= 0:
        raise ContractViolationError("horizons need positive T_B and T_c")
    n = math.ceil(T_B / T_c)
    out = []
    for i in range(1, n + 1):
        h = min(i * T_c, T_B)
        if not out or h > out[-1] + 1e-12:
            out.append(h)
    return out


def score_candidate(rec: CandidateRecord, lam: float) -> float:
    """Horizon-discounted predicted uncertainty reduction."""
    if rec.delta_xi < 0:
        raise ContractViolationError("delta_xi must be nonnegative")
    return math.exp(-lam * rec.horizon) * rec.delta_xi


def exploration_cost(cost_info: float, cost_cons: float) -> float:
    """Excess predicted cost of the informative segment, clamped at zero."""
    if not (np.isfinite(cost_info) and np.isfinite(cost_cons)):
        raise ContractViolationError("predicted costs must be finite")
    return max(0.0, cost_info - cost_cons)


def feasible_set(records: list, ledger: BudgetLedger) -> list:
    """Indices of valid candidates whose charge still fits the budget."""
    out = []
    for rec in records:
        rec.budget_feasible = ledger.spent + rec.exploration_cost <= ledger.budget
        if rec.valid and rec.budget_feasible:
            out.append(rec.index)
    return out


@dataclass
class CommitDecision:
    policy_tag: str  # informative | conservative | fallback
    index: int | None
    next_replan_dt: float
    charged: float
    score: float = 0.0
    delta_xi: float = 0.0


def commit(records: list, ledger: BudgetLedger, lam: float, t_k: float = 0.0,
           T_c: float | None = None) -> CommitDecision:
    """Commit rule: best-scoring feasible informative candidate, else the
    shortest conservative segment.

    Ties are broken toward the cheaper candidate and then the smaller
    index.  A feasible set whose best score is zero predicts no
    uncertainty reduction, so the conservative segment is preferred and
    nothing is charged.  When even the shortest conservative segment is
    unavailable (racing: the nominal failed verification), the fallback
    continues for one increment.
    """
    by_index = {rec.index: rec for rec in records}
    for rec in records:
        rec.score = score_candidate(rec, lam)
    feas = feasible_set(records, ledger)
    t_short = T_c if T_c is not None else (records[0].horizon if records else 0.0)

    if feas:
        best = max(feas, key=lambda i: (by_index[i].score, -by_index[i].exploration_cost, -i))
        rec = by_index[best]
        if rec.score > 0.0:
            ledger.charge(t_k, rec.exploration_cost)
            return CommitDecision("informative", rec.index, rec.horizon, rec.exploration_cost,
                                  rec.score, rec.delta_xi)

    if records:
        rec = by_index[min(by_index)]
        if rec.cons_ok:
            ledger.per_epoch.append((t_k, 0.0))
            return CommitDecision("conservative", rec.index, rec.horizon, 0.0)
    ledger.per_epoch.append((t_k, 0.0))
    return CommitDecision("fallback", None, min(t_short, T_c or t_short), 0.0)


# ---------------------------------------------------------------------------
# Mission logging


@dataclass
class EpochLog:
    t_k: float
    tag: str
    index: int | None
    horizon: float
    delta_xi: float
    score: float
    d_j_exp: float
    spent_after: float
    widths: list
    n_candidates: int
    n_valid: int
    p_safe: float
    plan_seconds: float


@dataclass
class MissionLog:
    epochs: list = field(default_factory=list)
    times: np.ndarray | None = None
    states: np.ndarray | None = None
    inputs: np.ndarray | None = None
    epoch_of_step: np.ndarray | None = None
    bounds_history: list = field(default_factory=list)
    ledger: BudgetLedger | None = None
    box0: ParameterBox | None = None
    box_final: ParameterBox | None = None
    true_theta: np.ndarray | None = None
    total_cost: float = 0.0
    mission_complete: bool = False
    safe_run: bool = True
    violation_time: float | None = None
    lap_times: list = field(default_factory=list)
    aborted: str | None = None
    method: str = ""
    seed: int = 0


class _SeedStream:
    """Deterministic stream of child seeds from one master seed."""

    def __init__(self, seed):
        self._ss = np.random.SeedSequence(seed)

    def next(self):
        return self._ss.spawn(1)[0]

    def rng(self):
        return np.random.default_rng(self.next())


def _append_segment(logbook: MissionLog, traj: Trajectory, epoch: int):
    if logbook.times is None:
        logbook.times = traj.times.copy()
        logbook.states = traj.states.copy()
        logbook.inputs = traj.inputs.copy()
        logbook.epoch_of_step = np.full(len(traj.inputs), epoch)
    else:
        logbook.times = np.concatenate([logbook.times, traj.times[1:]])
        logbook.states = np.vstack([logbook.states, traj.states[1:]])
        logbook.inputs = np.vstack([logbook.inputs, traj.inputs])
        logbook.epoch_of_step = np.concatenate(
            [logbook.epoch_of_step, np.full(len(traj.inputs), epoch)])


def _ingest_execution(model, traj, stack, box, window, eps, t_now, logbook, dirs):
    """Feed executed data through the history stack and SMID update."""
    for tup in collect_regression_tuples(model, traj, window):
        try_admit(stack, tup)
    new_box = smid_update(box, stack, eps)
    logbook.bounds_history.append((t_now, new_box.lo.copy(), new_box.hi.copy(),
                                   [width(new_box, d) for d in dirs]))
    return new_box


# ---------------------------------------------------------------------------
# Quadrotor (tube) instantiation


@dataclass
class QuadRuntime:
    model: ModelSpec
    world: QuadWorld
    objective: QuadMissionObjective
    box0: ParameterBox
    gains: AncillaryGains
    x0: np.ndarray
    t_f: float
    budget: float
    eps: float
    engine: EngineConfig = field(default_factory=EngineConfig)
    cem_backup: CEMConfig = field(default_factory=CEMConfig)
    cem_info: CEMConfig = field(default_factory=lambda: CEMConfig(n_iters=6, n_samples=64))
    tube: TubeConfig = field(default_factory=TubeConfig)
    info: InfoObjective = field(default_factory=InfoObjective)
    terminal_scale: np.ndarray | None = None
    dirs: DirectionSet | None = None
    via_points: list = field(default_factory=list)

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.dirs is None:
            self.dirs = DirectionSet.axes(self.model.param_dim)
        if self.terminal_scale is None:
            self.terminal_scale = 2.0 * np.ones(self.model.state_dim)
        if not self.box0.contains(self.model.true_theta):
            raise ContractViolationError("true theta must start inside the box")

    def guidance(self, x, T_B: float, theta_hat) -> np.ndarray:
        remaining = [w for w in self.via_points
                     if np.dot(self.objective.goal - x[:3], np.asarray(w) - x[:3]) > 0]
        return guidance_inputs(self.model, x, remaining + [self.objective.goal], T_B,
                               self.engine.dt, theta=theta_hat)


def run_quad_mission(rt: QuadRuntime, seed: int, method: str = "dual_gatekeeper") -> MissionLog:
    """Tube-instantiation mission: explore within budget while reaching the goal.

    method 'robust_baseline' plans the robust backup and tracks it with no
    exploration and no identification.
    """
    cfg = rt.engine
    seeds = _SeedStream(seed)
    logbook = MissionLog(ledger=BudgetLedger(rt.budget), box0=rt.box0.copy(),
                         true_theta=rt.model.true_theta.copy(), method=method, seed=int(seed))
    box = rt.box0.copy()
    stack = HistoryStack()
    x = rt.x0.copy()
    t = 0.0
    epoch = 0
    backup_abs: Trajectory | None = None  # nominal backup in absolute time
    logbook.bounds_history.append((0.0, box.lo.copy(), box.hi.copy(),
                                   [width(box, d) for d in rt.dirs]))

    if method == "robust_baseline":
        return _run_quad_baseline(rt, seeds, logbook)

    while t < rt.t_f - 1e-9 and epoch < cfg.max_epochs:
        tic = time.perf_counter()
        T_B = rt.t_f - t
        try:
            backup = _plan_backup_retrying(rt, x, box, T_B, seeds)
            backup_abs = backup.nominal.shifted(t)
        except PlanningFailureError as exc:
            if backup_abs is None:
                logbook.aborted = f"backup planning failed at mission start: {exc}"
                logbook.safe_run = False
                logbook.box_final = box
                return logbook
            log.warning("backup replan failed at t=%.2f; reusing previous plan", t)
            backup_abs = _slice_from(backup_abs, t)

        horizons = candidate_horizons(backup_abs.duration, cfg.T_c)
        if cfg.max_candidates is not None:
            horizons = horizons[: cfg.max_candidates]

        records = []
        explore = method == "dual_gatekeeper" and rt.budget > 0.0
        for i, T_i in enumerate(horizons, start=1):
            cons_traj = backup_abs.restrict(T_i)
            cons_traj.tag = "conservative"
            rec = CandidateRecord(index=i, horizon=T_i, conservative_traj=cons_traj,
                                  predicted_cost_cons=cost_of_trajectory(cons_traj, rt.objective))
            if explore:
                _build_quad_informative(rt, rec, x, box, T_i, backup_abs, seeds, cfg)
            records.append(rec)

        decision = commit(records, logbook.ledger, cfg.lambda_discount, t_k=t, T_c=cfg.T_c)
        rec = records[decision.index - 1] if decision.index else None

        if decision.policy_tag == "informative":
            segment = rec.informative_traj
        else:
            segment = records[0].conservative_traj
        policy = tracking_policy(segment, rt.gains, rt.model.input_bounds)
        h = min(decision.next_replan_dt, rt.t_f - t)
        executed = simulate_closed_loop(rt.model, policy, x, (t, t + h), rt.model.true_theta,
                                        disturbance_seed=seeds.next(), dt=cfg.dt, tag="executed")
        executed, done = _truncate_at_goal(executed, rt.world)
        _append_segment(logbook, executed, epoch)
        ok_exec = rt.world.state_ok(executed.states)
        if not np.all(ok_exec):
            logbook.safe_run = False
            logbook.violation_time = float(executed.times[int(np.argmin(ok_exec))])

        if method == "dual_gatekeeper":
            box = _ingest_execution(rt.model, executed, stack, box, cfg.window, rt.eps,
                                    executed.t1, logbook, rt.dirs)

        logbook.epochs.append(EpochLog(
            t_k=t, tag=decision.policy_tag, index=decision.index, horizon=h,
            delta_xi=decision.delta_xi, score=decision.score, d_j_exp=decision.charged,
            spent_after=logbook.ledger.spent,
            widths=[width(box, d) for d in rt.dirs],
            n_candidates=len(records), n_valid=sum(r.valid for r in records),
            p_safe=(rec.p_safe if decision.policy_tag == "informative" and rec else 1.0),
            plan_seconds=time.perf_counter() - tic,
        ))
        t = executed.t1
        x = executed.states[-1].copy()
        epoch += 1
        if done:
            logbook.mission_complete = True
            break

    logbook.box_final = box
    if logbook.states is not None:
        logbook.total_cost = float(rt.objective.stage_integral(
            logbook.states[None], logbook.inputs[None], cfg.dt)[0])
    return logbook


def _run_quad_baseline(rt: QuadRuntime, seeds: _SeedStream, logbook: MissionLog) -> MissionLog:
    """Pure robust behavior: one backup plan tracked to the goal, no learning."""
    cfg = rt.engine
    tic = time.perf_counter()
    try:
        backup = _plan_backup_retrying(rt, rt.x0, rt.box0, rt.t_f, seeds)
    except PlanningFailureError as exc:
        logbook.aborted = f"backup planning failed at mission start: {exc}"
        logbook.safe_run = False
        logbook.box_final = rt.box0.copy()
        return logbook
    policy = tracking_policy(backup.nominal, rt.gains, rt.model.input_bounds)
    executed = simulate_closed_loop(rt.model, policy, rt.x0, (0.0, rt.t_f),
                                    rt.model.true_theta, disturbance_seed=seeds.next(),
                                    dt=cfg.dt, tag="executed")
    executed, done = _truncate_at_goal(executed, rt.world)
    _append_segment(logbook, executed, 0)
    ok_exec = rt.world.state_ok(executed.states)
    if not np.all(ok_exec):
        logbook.safe_run = False
        logbook.violation_time = float(executed.times[int(np.argmin(ok_exec))])
    logbook.mission_complete = done
    logbook.epochs.append(EpochLog(
        t_k=0.0, tag="conservative", index=1, horizon=executed.duration, delta_xi=0.0,
        score=0.0, d_j_exp=0.0, spent_after=0.0,
        widths=[width(rt.box0, d) for d in rt.dirs], n_candidates=1, n_valid=0,
        p_safe=1.0, plan_seconds=time.perf_counter() - tic))
    logbook.box_final = rt.box0.copy()
    logbook.total_cost = float(rt.objective.stage_integral(
        logbook.states[None], logbook.inputs[None], cfg.dt)[0])
    return logbook


def _plan_backup_retrying(rt: QuadRuntime, x, box, T_B: float, seeds: _SeedStream,
                          retries: int = 2):
    """Backup planning with deterministic re-seeded retries on failure."""
    last_exc = None
    for _ in range(retries + 1):
        try:
            return plan_backup(rt.model, x, box, rt.world, rt.objective, T_B, rt.gains,
                               rt.cem_backup, seeds.rng(), tube=rt.tube, dt=rt.engine.dt,
                               init_mean=rt.guidance(x, T_B, box.midpoint))
        except PlanningFailureError as exc:
            last_exc = exc
    raise last_exc


def _slice_from(traj_abs: Trajectory, t: float) -> Trajectory:
    dt = float(traj_abs.times[1] - traj_abs.times[0])
    i0 = min(int(round((t - traj_abs.t0) / dt)), len(traj_abs.inputs) - 1)
    return Trajectory(traj_abs.times[i0:], traj_abs.states[i0:], traj_abs.inputs[i0:],
                      tag=traj_abs.tag)


def _build_quad_informative(rt: QuadRuntime, rec: CandidateRecord, x, box, T_i,
                            backup_abs: Trajectory, seeds: _SeedStream, cfg: EngineConfig):
    terminal = backup_abs.state_at(backup_abs.t0 + T_i)
    stage = _quad_stage_cost_fn(rt)
    plan = plan_informative_segment(
        rt.model, x, box.midpoint, T_i, terminal, rt.info, stage, rt.cem_info, seeds.rng(),
        dt=cfg.dt, init_mean=backup_abs.restrict(T_i).inputs, terminal_scale=rt.terminal_scale)
    info_traj = plan.traj.shifted(backup_abs.t0)
    info_traj.tag = "informative"
    rec.informative_traj = info_traj
    rec.predicted_cost_info = cost_of_trajectory(info_traj, rt.objective)
    rec.exploration_cost = exploration_cost(rec.predicted_cost_info, rec.predicted_cost_cons)
    if not plan.recoverable:
        rec.valid = False
        return
    check = verify_tube_candidate(rt.model, plan.traj, box, rt.world, rt.gains,
                                  seeds.next(), n_rollouts=rt.tube.n_rollouts,
                                  inflation=rt.tube.inflation)
    rec.valid = check.valid
    rec.p_safe = 1.0 if check.valid else 0.0
    if not rec.valid:
        return
    if cfg.predictor == "rollout":
        pred = predict_rollout(
            rt.model, tracking_policy(plan.traj, rt.gains, rt.model.input_bounds), x, box,
            rt.dirs, cfg.n_shrinkage_rollouts, seeds.next(), horizon=T_i, window=cfg.window,
            eps=rt.eps, dt=cfg.dt, quantile=cfg.shrinkage_quantile)
    else:
        pred = predict_consistency(stack_regressor(rt.model, plan.traj),
                                   rt.model.disturbance_bound, box, rt.dirs)
    rec.delta_xi = max(0.0, pred.delta_xi)


def _quad_stage_cost_fn(rt: QuadRuntime):
    obj = rt.objective
    world = rt.world
    dt = rt.engine.dt

    def stage(times, states, inputs):
        mission = obj.stage_integral(states, inputs, dt)
        pen = dt * np.sum(world.penalty(states), axis=-1)
        return mission + obj.penalty_weight * pen, pen <= 1e-12

    return stage


def _truncate_at_goal(traj: Trajectory, world: QuadWorld):
    hits = world.goal_reached(traj.states)
    if not np.any(hits):
        return traj, False
    k = max(int(np.argmax(hits)), 1)
    cut = Trajectory(traj.times[: k + 1], traj.states[: k + 1], traj.inputs[:k], tag=traj.tag)
    return cut, True


# ---------------------------------------------------------------------------
# Racing (gatekeeper) instantiation


@dataclass
class RaceRuntime:
    model: ModelSpec
    car: object
    world: RaceWorld
    verify_world: RaceWorld
    objective: RacingObjective
    box0: ParameterBox
    x0: np.ndarray
    lap_count: int
    t_max: float
    budget: float
    eps: float
    pursuit: PursuitParams = field(default_factory=PursuitParams)
    T_B: float = 6.0
    T_fb: float = 4.0
    engine: EngineConfig = field(default_factory=EngineConfig)
    cem: CEMConfig = field(default_factory=CEMConfig)
    cem_post: CEMConfig | None = None  # richer search once exploration stops
    info: InfoObjective = field(default_factory=lambda: InfoObjective(gamma=3.0))
    dirs: DirectionSet | None = None
    mu_planned: float | None = None  # fixed estimate for the no-SMID baselines
    explore_width_min: float = 0.15  # stop exploring once the box is this tight

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.dirs is None:
            self.dirs = DirectionSet.axes(self.model.param_dim)

    def fresh_pursuit(self):
        return pursuit_policy(self.world.track, self.car, self.model, self.pursuit)

    def fallback_spec(self) -> FallbackSpec:
        track = self.world.track
        v_safe = self.pursuit.v_safe

        def fallback_set(states):
            s, e_y, _ = track.project(states[..., :2])
            return (np.abs(e_y) <= 0.5 * track.half_width) & (states[..., 3] <= v_safe + 1.0)

        return FallbackSpec(self.fresh_pursuit, self.T_fb, fallback_set)


def run_race_mission(rt: RaceRuntime, seed: int, method: str = "dual_gatekeeper") -> MissionLog:
    """Gatekeeper-instantiation racing mission.

    Methods: dual_gatekeeper (nominal + informative candidates, budgeted),
    nominal_gk (verified nominal only), weighted_gk (verified weighted
    objective only), nominal / weighted (no safety layer, fixed parameter
    estimate), fallback (pure pursuit only).  Baselines never touch the
    budget ledger.
    """
    cfg = rt.engine
    seeds = _SeedStream(seed)
    logbook = MissionLog(ledger=BudgetLedger(rt.budget), box0=rt.box0.copy(),
                         true_theta=rt.model.true_theta.copy(), method=method, seed=int(seed))
    box = rt.box0.copy()
    stack = HistoryStack()
    x = rt.x0.copy()
    t = 0.0
    epoch = 0
    progress = 0.0
    last_s = None
    lap_marks = [0.0]
    uses_smid = method == "dual_gatekeeper"
    fb = rt.fallback_spec()
    logbook.bounds_history.append((0.0, box.lo.copy(), box.hi.copy(),
                                   [width(box, d) for d in rt.dirs]))

    while len(logbook.lap_times) < rt.lap_count and t < rt.t_max - 1e-9 and epoch < cfg.max_epochs:
        tic = time.perf_counter()
        theta_plan = np.array([rt.mu_planned]) if rt.mu_planned is not None else box.midpoint

        records: list = []
        if method == "fallback":
            decision = CommitDecision("fallback", None, cfg.T_c, 0.0)
            segment = None
        elif method in ("nominal", "weighted"):
            segment = _plan_race_segment(rt, method, x, theta_plan, seeds,
                                         cfg).restrict(cfg.T_c)
            decision = CommitDecision("conservative", 1, cfg.T_c, 0.0)
        else:
            records, decision, segment = _race_gatekeeper_epoch(
                rt, method, x, box, theta_plan, seeds, cfg, fb, logbook.ledger, t)

        if segment is None:
            policy = rt.fresh_pursuit()
        else:
            policy = switched_policy(segment, rt.fresh_pursuit())
        h = min(decision.next_replan_dt, rt.t_max - t)
        executed = simulate_closed_loop(rt.model, _single_state(policy), x, (0.0, h),
                                        rt.model.true_theta, disturbance_seed=seeds.next(),
                                        dt=cfg.dt, tag="executed",
                                        truncate_on_blowup=True).shifted(t)
        if len(executed.inputs) == 0:
            logbook.safe_run = False
            logbook.violation_time = t
            logbook.aborted = "numerical blowup"
            break
        _append_segment(logbook, executed, epoch)

        ok, s_path, e_y, _ = rt.world.sweep_states(executed.states[None])
        ok = ok[0]
        blown = len(executed.inputs) < max(1, int(round(h / cfg.dt)))
        if not np.all(ok) or blown:
            logbook.safe_run = False
            bad = int(np.argmin(ok)) if not np.all(ok) else len(executed.times) - 1
            logbook.violation_time = float(executed.times[bad])
            logbook.aborted = "safety violation"
        progress, last_s, lap_ts = _advance_progress(progress, last_s, s_path[0],
                                                     executed.times, rt.world.track.length)
        for lap_t in lap_ts:
            logbook.lap_times.append(lap_t - lap_marks[-1])
            lap_marks.append(lap_t)

        if uses_smid:
            box = _ingest_execution(rt.model, executed, stack, box, cfg.window, rt.eps,
                                    executed.t1, logbook, rt.dirs)

        rec = next((r for r in records if r.index == decision.index), None)
        p_safe = 1.0
        if rec is not None:
            p_safe = rec.p_safe if decision.policy_tag == "informative" else rec.p_safe_cons
        logbook.epochs.append(EpochLog(
            t_k=t, tag=decision.policy_tag, index=decision.index, horizon=h,
            delta_xi=decision.delta_xi, score=decision.score, d_j_exp=decision.charged,
            spent_after=logbook.ledger.spent,
            widths=[width(box, d) for d in rt.dirs],
            n_candidates=len(records), n_valid=sum(r.valid for r in records),
            p_safe=p_safe, plan_seconds=time.perf_counter() - tic,
        ))
        t = executed.t1
        x = executed.states[-1].copy()
        epoch += 1
        if not logbook.safe_run:
            break

    logbook.box_final = box
    logbook.mission_complete = len(logbook.lap_times) >= rt.lap_count and logbook.safe_run
    if logbook.times is not None:
        _, s_all, _, _ = rt.world.sweep_states(logbook.states[None])
        ds = _wrap_ds(np.diff(s_all[0]), rt.world.track.length)
        logbook.total_cost = float(np.sum(cfg.dt * rt.objective.mission_rate(ds / cfg.dt)))
    return logbook


def _single_state(policy):
    """Adapt a batched policy to the single-state execution loop."""

    def wrapped(t, x):
        u = policy(t, x[None] if x.ndim == 1 else x)
        return u[0] if np.ndim(u) == 2 else u

    return wrapped


def _default_race_mean(rt: RaceRuntime, cfg: EngineConfig, x=None, theta_plan=None) -> np.ndarray:
    """Pursuit-guidance warm start at a grip-aware target speed."""
    if x is None or theta_plan is None:
        n_steps = max(1, int(round(rt.T_B / cfg.dt)))
        u0 = np.array([0.25 * rt.model.input_bounds.hi[0], 0.0, 0.0])
        return np.tile(u0, (n_steps, 1))
    return race_guidance_inputs(rt.model, rt.car, rt.world.track, x, theta_plan,
                                rt.objective.v_ref, rt.T_B, cfg.dt, pp=rt.pursuit)


def _plan_race_segment(rt: RaceRuntime, kind: str, x, theta_plan, seeds: _SeedStream,
                       cfg: EngineConfig, rich: bool = False) -> Trajectory:
    init_mean = _default_race_mean(rt, cfg, x=x, theta_plan=theta_plan)
    cem = rt.cem_post if (rich and rt.cem_post is not None) else rt.cem
    if kind in ("nominal", "nominal_gk"):
        plan = plan_nominal_racing(rt.model, x, theta_plan, rt.T_B, rt.world, rt.objective,
                                   cem, seeds.rng(), dt=cfg.dt, init_mean=init_mean)
        traj = plan.traj
    else:
        stage = racing_stage_cost_fn(rt.model, rt.world, rt.objective, cfg.dt)
        plan = plan_informative_segment(rt.model, x, theta_plan, rt.T_B, None, rt.info, stage,
                                        cem, seeds.rng(), dt=cfg.dt, init_mean=init_mean,
                                        endpoint_preserving=True)
        traj = plan.traj
        traj.tag = "informative" if kind == "informative" else "weighted"
    return traj


def _race_gatekeeper_epoch(rt: RaceRuntime, method: str, x, box, theta_plan,
                           seeds: _SeedStream, cfg: EngineConfig, fb: FallbackSpec,
                           ledger: BudgetLedger, t_k: float):
    """One gatekeeper replanning cycle: plan, verify, score, commit.

    Returns (records, decision, committed segment or None for fallback);
    segments are in epoch-relative time.
    """
    explore = (method == "dual_gatekeeper" and rt.budget > 0.0
               and width(box, rt.dirs.dirs[0]) > rt.explore_width_min)
    base_kind = "weighted" if method == "weighted_gk" else "nominal"
    base_traj = _plan_race_segment(rt, base_kind, x, theta_plan, seeds, cfg,
                                   rich=not explore)

    horizons = candidate_horizons(rt.T_B, cfg.T_c)
    if cfg.max_candidates is not None:
        horizons = horizons[: cfg.max_candidates]
    check = _race_state_check(rt.verify_world)

    records = []
    for i, T_i in enumerate(horizons, start=1):
        cons_seg = base_traj.restrict(T_i)
        cons_seg.tag = "conservative"
        verd_c, data_c = verify_rollouts(
            rt.model, switched_policy(cons_seg, fb.policy_factory()), x, box, fb,
            cfg.n_verify, cfg.delta, seeds.next(), horizon=T_i, dt=cfg.dt, state_check=check)
        rec = CandidateRecord(index=i, horizon=T_i, conservative_traj=cons_seg,
                              p_safe_cons=verd_c.p_safe, cons_ok=verd_c.accepted)
        rec.predicted_cost_cons = _rollout_mission_cost(rt, data_c, T_i, cfg)

        if explore:
            # Informative segments are planned per horizon: open-loop wiggle
            # exploration is only tractable over short spans inside the
            # corridor, and the planned excitation stays endpoint-neutral.
            stage = racing_stage_cost_fn(rt.model, rt.world, rt.objective, cfg.dt)
            info_plan = plan_informative_segment(
                rt.model, x, theta_plan, T_i, None, rt.info, stage, rt.cem,
                seeds.rng(), dt=cfg.dt,
                init_mean=_default_race_mean(rt, cfg, x=x, theta_plan=theta_plan)[
                    : max(1, int(round(T_i / cfg.dt)))],
                endpoint_preserving=True)
            info_seg = info_plan.traj
            info_seg.tag = "informative"
            verd_i, data_i = verify_rollouts(
                rt.model, switched_policy(info_seg, fb.policy_factory()), x, box, fb,
                cfg.n_verify, cfg.delta, seeds.next(), horizon=T_i, dt=cfg.dt, state_check=check)
            rec.informative_traj = info_seg
            rec.p_safe = verd_i.p_safe
            rec.valid = verd_i.accepted and verd_c.accepted
            rec.predicted_cost_info = _rollout_mission_cost(rt, data_i, T_i, cfg)
            rec.exploration_cost = exploration_cost(rec.predicted_cost_info,
                                                    rec.predicted_cost_cons)
            if rec.valid:
                pred = predict_rollout(
                    rt.model, switched_policy(info_seg, fb.policy_factory()), x, box,
                    rt.dirs, cfg.n_shrinkage_rollouts, seeds.next(), horizon=T_i,
                    window=cfg.window, eps=rt.eps, dt=cfg.dt,
                    quantile=cfg.shrinkage_quantile)
                rec.delta_xi = max(0.0, pred.delta_xi)
        records.append(rec)

    if method in ("nominal_gk", "weighted_gk"):
        accepted = [r for r in records if r.cons_ok]
        if accepted:
            rec = accepted[-1]  # longest verified horizon
            return records, CommitDecision("conservative", rec.index, rec.horizon, 0.0), \
                rec.conservative_traj
        return records, CommitDecision("fallback", None, cfg.T_c, 0.0), None

    decision = commit(records, ledger, cfg.lambda_discount, t_k=t_k, T_c=cfg.T_c)
    if decision.policy_tag == "fallback":
        # The shortest conservative failed its handoff verification; a longer
        # verified segment (whose fallback handoff lands elsewhere) is still a
        # certified-safe conservative commitment and beats idling on the
        # fallback for a full increment.
        for rec in records[1:]:
            if rec.cons_ok:
                decision = CommitDecision("conservative", rec.index, rec.horizon, 0.0)
                break
    if decision.policy_tag == "informative":
        segment = records[decision.index - 1].informative_traj
    elif decision.policy_tag == "conservative":
        segment = records[decision.index - 1].conservative_traj
    else:
        segment = None
    return records, decision, segment


def _race_state_check(world: RaceWorld):
    def check(states):
        ok, s, e_y, _ = world.sweep_states(states)
        return ok, (s, e_y)

    return check


def _rollout_mission_cost(rt: RaceRuntime, data, T_i: float, cfg: EngineConfig) -> float:
    """Mission cost of the segment part of the verification rollouts."""
    s = data.aux[0]
    seg_steps = int(round(T_i / cfg.dt))
    ds = _wrap_ds(np.diff(s[:, : seg_steps + 1], axis=1), rt.world.track.length)
    per = np.sum(cfg.dt * rt.objective.mission_rate(ds / cfg.dt), axis=1)
    if cfg.cost_aggregate == "worst":
        return float(np.max(per))
    return float(np.mean(per))


def _wrap_ds(ds, length: float):
    ds = np.where(ds > length / 2, ds - length, ds)
    return np.where(ds < -length / 2, ds + length, ds)


def _advance_progress(progress: float, last_s, s_path, times, length: float):
    """Accumulate unwrapped progress and detect whole-lap crossing times."""
    if last_s is None:
        last_s = s_path[0]
    s_full = np.concatenate([[last_s], s_path[1:]])
    ds = _wrap_ds(np.diff(s_full), length)
    cum = progress + np.cumsum(ds)
    lap_times = []
    lap = math.floor(progress / length) + 1
    for k, p in enumerate(cum):
        while p >= lap * length:
            lap_times.append(float(times[k + 1]))
            lap += 1
    new_progress = float(cum[-1]) if len(cum) else progress
    return new_progress, float(s_path[-1]), lap_times
