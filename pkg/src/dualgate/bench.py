"""Scenario definitions, metrics, experiment orchestration, and file I/O.

A scenario is a JSON-serializable dict (see builtin_scenario) naming the
model, environment, method, budget, and all module configurations.  Every
run writes epochs.csv, trajectory.csv, bounds.csv, and summary.json into
the output directory, along with the fully materialized scenario.json for
provenance; sweeps add table.csv.  Floats are serialized with 9
significant digits and (scenario, seed) fully determines all outputs.

Methods:
  dual_gatekeeper  -- the budgeted dual-control engine (both domains)
  robust_baseline  -- quadrotor: track the robust backup, no exploration
  nominal          -- racing: raw MPC on a fixed parameter estimate
  weighted         -- racing: single weighted mission+information objective
  fallback         -- racing: pure-pursuit fallback only
  nominal_gk       -- racing: gatekeeper-verified nominal segments
  weighted_gk      -- racing: gatekeeper-verified weighted segments
Baselines never touch the budget ledger; their summaries report budget
fields as null.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import (
    EngineConfig,
    MissionLog,
    QuadRuntime,
    RaceRuntime,
    run_quad_mission,
    run_race_mission,
)
from .errors import ContractViolationError
from .models import drag_quadrotor, vector_drag_quadrotor
from .planners import (
    CEMConfig,
    InfoObjective,
    PursuitParams,
    QuadMissionObjective,
    RacingObjective,
    TubeConfig,
    quad_pd_gains,
)
from .racing import CarParams, car_model, stadium_track
from .smid import DirectionSet, ParameterBox, calibrate_eps
from .worlds import BoxObstacle, QuadWorld, RaceWorld

QUAD_METHODS = ("dual_gatekeeper", "robust_baseline")
RACE_METHODS = ("dual_gatekeeper", "nominal", "weighted", "fallback", "nominal_gk", "weighted_gk")

MU_PLANNED_GRID = [0.28, 0.47, 0.64, 0.81, 0.90, 1.12, 1.36, 1.58, 1.73, 1.95]


# ---------------------------------------------------------------------------
# Built-in scenarios


def builtin_scenario(name: str) -> dict:
    """Full config dict for one of the shipped scenarios."""
    if name == "quad_case1":
        return {
            "name": "quad_case1",
            "domain": "quadrotor",
            "model": {"kind": "drag_quad", "true_theta": [0.3], "wbar": 0.03},
            "initial_box": {"lo": [0.0], "hi": [0.5]},
            "initial_state": [0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
            "goal": [8.0, 0.0, 1.0],
            "goal_radius": 0.5,
            "obstacles": [
                {"lo": [2.5, -2.0, 0.0], "hi": [3.5, 0.55, 3.0]},
                {"lo": [5.5, -0.55, 0.0], "hi": [6.5, 2.0, 3.0]},
            ],
            "via_points": [[2.4, 1.27, 1.0], [3.6, 1.27, 1.0],
                           [5.4, -1.27, 1.0], [6.6, -1.27, 1.0]],
            "t_f": 12.0,
            "objective": {"alpha": 0.02, "beta": 2.0},
            "budget_pct": 110.0,
            "method": "dual_gatekeeper",
            "engine": {"T_c": 2.0, "lambda_discount": 0.1, "n_shrinkage_rollouts": 12,
                       "window": 0.4, "dt": 0.02, "max_candidates": 3},
            "cem_backup": {"n_samples": 96, "n_iters": 8, "n_elites": 12, "knot_dt": 0.4},
            "cem_info": {"n_samples": 64, "n_iters": 8, "n_elites": 10, "knot_dt": 0.4, "init_std_frac": 0.2, "smoothing": 0.3},
            "tube": {"n_rollouts": 64, "n_holdout": 64, "inflation": 1.2, "passes": 2},
            "info": {"gamma": 2.5, "epsilon_reg": 1e-6},
            "gains": {"kp": 4.0, "kd": 3.2},
        }
    if name == "quad_case2":
        cfg = builtin_scenario("quad_case1")
        cfg.update({
            "name": "quad_case2",
            "model": {"kind": "vector_drag_quad", "true_theta": [0.2, 0.35], "wbar": 0.02},
            "initial_box": {"lo": [0.0, 0.0], "hi": [0.5, 0.8]},
        })
        return cfg
    if name == "racing":
        return {
            "name": "racing",
            "domain": "racing",
            "model": {"true_mu": 0.9, "wbar": 0.02},
            "car": {},
            "track": {"straight": 15.0, "radius": 8.0, "half_width": 1.5, "ds": 0.1},
            "initial_box": {"lo": [0.2], "hi": [2.0]},
            "lap_count": 3,
            "t_max": 220.0,
            "T_B": 6.0,
            "T_fb": 4.0,
            "verify_margin": 0.12,
            "objective": {"v_ref": 8.0, "v_cap": 8.0, "q_prog": 4.0},
            "pursuit": {"v_safe": 2.0},
            "budget_pct": 140.0,
            "method": "dual_gatekeeper",
            "mu_planned": None,
            "engine": {"T_c": 2.0, "lambda_discount": 0.1, "n_shrinkage_rollouts": 10,
                       "n_verify": 200, "delta": 0.05, "window": 0.4, "dt": 0.02},
            "cem": {"n_samples": 80, "n_iters": 6, "n_elites": 12, "knot_dt": 0.2, "init_std_frac": 0.1, "min_std_frac": 0.015, "smoothing": 0.3},
            "cem_post": {"n_samples": 112, "n_iters": 9, "n_elites": 14, "knot_dt": 0.2, "init_std_frac": 0.1, "min_std_frac": 0.015, "smoothing": 0.3},
            "info": {"gamma": 4.0, "epsilon_reg": 1e-6},
        }
    raise ContractViolationError(f"unknown scenario '{name}'")


def load_scenario(path_or_name) -> dict:
    """Load a scenario dict from a JSON file or a builtin name."""
    p = Path(str(path_or_name))
    if p.suffix == ".json" and p.exists():
        with open(p) as fh:
            return json.load(fh)
    try:
        return builtin_scenario(str(path_or_name))
    except ContractViolationError:
        raise ContractViolationError(
            f"scenario '{path_or_name}' is neither a JSON file nor a builtin name")


def _require(cfg: dict, key: str, path: str):
    if key not in cfg:
        raise ContractViolationError(f"scenario config missing field '{path}.{key}'")
    return cfg[key]


# ---------------------------------------------------------------------------
# Runtime construction


def _build_model(cfg: dict):
    domain = _require(cfg, "domain", "")
    mcfg = dict(cfg.get("model", {}))
    if domain == "quadrotor":
        kind = mcfg.pop("kind", "drag_quad")
        theta = mcfg.pop("true_theta", None)
        if kind == "drag_quad":
            return drag_quadrotor(true_cd=theta[0] if theta else 0.3, **mcfg)
        if kind == "vector_drag_quad":
            kw = {}
            if theta:
                kw = {"true_cd1": theta[0], "true_cd2": theta[1]}
            return vector_drag_quadrotor(**kw, **mcfg)
        raise ContractViolationError(f"unknown quadrotor model kind '{kind}'")
    if domain == "racing":
        car = CarParams(**cfg.get("car", {}))
        return car_model(car, **mcfg), car
    raise ContractViolationError(f"unknown domain '{domain}'")


def _quad_probe_inputs(model, dt: float, duration: float = 4.0, seed: int = 0):
    return None  # default uniform-random knots inside the input box


def _car_probe_inputs(model, dt: float, duration: float = 4.0):
    """Scripted throttle + sine-steer maneuver covering race-like excitation."""
    n = int(round(duration / dt))
    t = dt * np.arange(n)
    fd = np.where(t < 2.5, 14.0, 8.0)
    fb = np.zeros(n)
    dd = 2.0 * np.sin(2 * np.pi * 0.5 * t)
    return np.stack([fd, fb, dd], axis=1)


def build_quad_runtime(cfg: dict, budget_abs: float) -> QuadRuntime:
    model = _build_model(cfg)
    box0 = ParameterBox(np.array(cfg["initial_box"]["lo"]), np.array(cfg["initial_box"]["hi"]))
    ocfg = cfg.get("objective", {})
    objective = QuadMissionObjective(goal=np.array(_require(cfg, "goal", "")),
                                     alpha=ocfg.get("alpha", 0.1), beta=ocfg.get("beta", 1.0),
                                     goal_radius=cfg.get("goal_radius", 0.5))
    world = QuadWorld(
        state_box=model.state_bounds,
        obstacles=[BoxObstacle(np.array(o["lo"]), np.array(o["hi"]))
                   for o in cfg.get("obstacles", [])],
        goal=objective.goal,
        goal_radius=objective.goal_radius,
    )
    engine = EngineConfig(**cfg.get("engine", {}))
    eps = calibrate_eps(model, engine.window, engine.dt,
                        probe_inputs=_quad_probe_inputs(model, engine.dt),
                        x0=np.array(cfg["initial_state"]), theta=box0.hi)
    gains_cfg = cfg.get("gains", {})
    scale = 2.0 * np.ones(model.state_dim)
    return QuadRuntime(
        model=model,
        world=world,
        objective=objective,
        box0=box0,
        gains=quad_pd_gains(**gains_cfg),
        x0=np.array(_require(cfg, "initial_state", "")),
        t_f=float(_require(cfg, "t_f", "")),
        budget=budget_abs,
        eps=eps,
        engine=engine,
        cem_backup=CEMConfig(**cfg.get("cem_backup", {})),
        cem_info=CEMConfig(**cfg.get("cem_info", {})),
        tube=TubeConfig(**cfg.get("tube", {})),
        info=_info_objective(cfg),
        terminal_scale=scale,
        via_points=[np.array(v) for v in cfg.get("via_points", [])],
    )


def _info_objective(cfg: dict) -> InfoObjective:
    icfg = dict(cfg.get("info", {}))
    if "W_theta" in icfg and icfg["W_theta"] is not None:
        icfg["W_theta"] = np.array(icfg["W_theta"])
    return InfoObjective(**icfg)


def build_race_runtime(cfg: dict, budget_abs: float) -> RaceRuntime:
    model, car = _build_model(cfg)
    track = stadium_track(**cfg.get("track", {}))
    margin = float(cfg.get("verify_margin", 0.12))
    world = RaceWorld(track=track, state_box=model.state_bounds, boundary_margin=0.0)
    verify_world = RaceWorld(track=track, state_box=model.state_bounds, boundary_margin=margin)
    box0 = ParameterBox(np.array(cfg["initial_box"]["lo"]), np.array(cfg["initial_box"]["hi"]))
    engine = EngineConfig(**cfg.get("engine", {}))
    eps = calibrate_eps(model, engine.window, engine.dt,
                        probe_inputs=_car_probe_inputs(model, engine.dt),
                        x0=_race_start_state(track))
    mu_planned = cfg.get("mu_planned")
    return RaceRuntime(
        model=model,
        car=car,
        world=world,
        verify_world=verify_world,
        objective=RacingObjective(**cfg.get("objective", {})),
        box0=box0,
        x0=_race_start_state(track),
        lap_count=int(cfg.get("lap_count", 4)),
        t_max=float(cfg.get("t_max", 260.0)),
        budget=budget_abs,
        eps=eps,
        pursuit=PursuitParams(**cfg.get("pursuit", {})),
        T_B=float(cfg.get("T_B", 6.0)),
        T_fb=float(cfg.get("T_fb", 4.0)),
        engine=engine,
        cem=CEMConfig(**cfg.get("cem", {})),
        cem_post=CEMConfig(**cfg["cem_post"]) if cfg.get("cem_post") else None,
        info=_info_objective(cfg),
        mu_planned=float(mu_planned) if mu_planned is not None else None,
    )


def _race_start_state(track) -> np.ndarray:
    pos = track.waypoints[0]
    psi = track.headings[0]
    return np.array([pos[0], pos[1], psi, 0.5, 0.0, 0.0, 0.0])


# ---------------------------------------------------------------------------
# Metrics


@dataclass
class MetricsSummary:
    name: str
    domain: str
    method: str
    seed: int
    total_cost: float
    cost_pct_of_baseline: float | None
    uncertainty_reduction_pct: list
    budget_consumed_pct: float | None
    budget_abs: float | None
    safe_run: bool
    mission_complete: bool
    lap_times: list = field(default_factory=list)
    first_lap_time: float | None = None
    last_lap_time: float | None = None
    mu_planned: float | None = None
    n_epochs: int = 0

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def summarize(cfg: dict, logbook: MissionLog, baseline_cost: float | None,
              budget_abs: float | None) -> MetricsSummary:
    box0, boxf = logbook.box0, logbook.box_final
    reductions = []
    if box0 is not None and boxf is not None:
        w0 = box0.hi - box0.lo
        wf = boxf.hi - boxf.lo
        with np.errstate(divide="ignore", invalid="ignore"):
            red = np.where(w0 > 0, 100.0 * (w0 - wf) / w0, 0.0)
        reductions = [float(r) for r in red]
    uses_ledger = logbook.method == "dual_gatekeeper"
    budget_pct = None
    if uses_ledger and budget_abs and budget_abs > 0:
        budget_pct = 100.0 * logbook.ledger.spent / budget_abs
    elif uses_ledger:
        budget_pct = 0.0
    cost_pct = None
    if baseline_cost is not None and baseline_cost > 0:
        cost_pct = 100.0 * logbook.total_cost / baseline_cost
    laps = [float(x) for x in logbook.lap_times]
    return MetricsSummary(
        name=cfg.get("name", "scenario"),
        domain=cfg["domain"],
        method=logbook.method,
        seed=logbook.seed,
        total_cost=float(logbook.total_cost),
        cost_pct_of_baseline=cost_pct,
        uncertainty_reduction_pct=reductions,
        budget_consumed_pct=budget_pct,
        budget_abs=budget_abs if uses_ledger else None,
        safe_run=bool(logbook.safe_run),
        mission_complete=bool(logbook.mission_complete),
        lap_times=laps,
        first_lap_time=laps[0] if laps else None,
        last_lap_time=laps[-1] if laps else None,
        mu_planned=cfg.get("mu_planned"),
        n_epochs=len(logbook.epochs),
    )


# ---------------------------------------------------------------------------
# Running


def compute_baseline_cost(cfg: dict, seed: int = 0) -> float:
    """Total cost of the pure robust baseline for this scenario.

    Quadrotor: track the robust backup with no exploration.  Racing: run
    the pure-pursuit fallback.  Used to resolve percentage budgets.
    """
    logbook = _run_baseline(cfg, seed)
    if logbook.aborted and not logbook.mission_complete:
        raise ContractViolationError(f"baseline run failed: {logbook.aborted}")
    if logbook.total_cost <= 0:
        raise ContractViolationError("degenerate baseline: zero mission cost")
    return float(logbook.total_cost)


def _run_baseline(cfg: dict, seed: int) -> MissionLog:
    if cfg["domain"] == "quadrotor":
        rt = build_quad_runtime(cfg, budget_abs=0.0)
        return run_quad_mission(rt, seed, method="robust_baseline")
    rt = build_race_runtime(cfg, budget_abs=0.0)
    return run_race_mission(rt, seed, method="fallback")


def resolve_budget(cfg: dict, baseline_cost: float | None = None, baseline_seed: int = 0):
    """Absolute exploration budget and the baseline cost used to derive it.

    budget_pct is the allowed total mission cost as a percentage of the
    baseline; the exploration budget is the excess over principal:
    B = (pct/100 - 1) * baseline.  budget_abs in the config wins outright.
    """
    if cfg.get("budget_abs") is not None:
        return float(cfg["budget_abs"]), baseline_cost
    pct = cfg.get("budget_pct")
    if pct is None:
        return 0.0, baseline_cost
    if baseline_cost is None:
        baseline_cost = compute_baseline_cost(cfg, seed=baseline_seed)
    if pct < 100.0:
        raise ContractViolationError("budget_pct below 100 leaves no exploration budget")
    return (pct / 100.0 - 1.0) * baseline_cost, baseline_cost


def run_scenario(path_or_name, seed: int, overrides: dict | None = None,
                 out_dir=None, baseline_cost: float | None = None):
    """Execute a scenario end-to-end; returns (MetricsSummary, MissionLog).

    overrides are merged shallowly per top-level key (nested dicts update).
    """
    cfg = copy.deepcopy(load_scenario(path_or_name))
    for key, val in (overrides or {}).items():
        if isinstance(val, dict) and isinstance(cfg.get(key), dict):
            cfg[key].update(val)
        else:
            cfg[key] = val
    method = cfg.get("method", "dual_gatekeeper")
    domain = _require(cfg, "domain", "")
    valid = QUAD_METHODS if domain == "quadrotor" else RACE_METHODS
    if method not in valid:
        raise ContractViolationError(f"method '{method}' not valid for domain '{domain}'")

    needs_budget = method == "dual_gatekeeper"
    budget_abs, baseline_cost = (resolve_budget(cfg, baseline_cost) if needs_budget
                                 else (0.0, baseline_cost))
    if domain == "quadrotor":
        rt = build_quad_runtime(cfg, budget_abs)
        logbook = run_quad_mission(rt, seed, method=method)
        dirs = rt.dirs
    else:
        rt = build_race_runtime(cfg, budget_abs)
        logbook = run_race_mission(rt, seed, method=method)
        dirs = rt.dirs

    summary = summarize(cfg, logbook, baseline_cost, budget_abs if needs_budget else None)
    if out_dir is not None:
        write_outputs(Path(out_dir), cfg, logbook, summary, dirs, budget_abs)
    return summary, logbook


def sweep(path_or_name, seeds, methods, out_dir=None, overrides=None):
    """Run a scenario across (method, seed) trials; returns the trial rows.

    For the fixed-estimate racing baselines (nominal, weighted) each trial
    takes its planned friction from the mu_planned grid, matching the
    trial protocol of the benchmark tables.
    """
    seeds = list(seeds)
    if not seeds:
        raise ContractViolationError("sweep needs at least one seed")
    cfg0 = load_scenario(path_or_name)
    baseline_cost = None
    if any(m == "dual_gatekeeper" for m in methods):
        merged = copy.deepcopy(cfg0)
        for key, val in (overrides or {}).items():
            if isinstance(val, dict) and isinstance(merged.get(key), dict):
                merged[key].update(val)
            else:
                merged[key] = val
        if merged.get("budget_pct") is not None and merged.get("budget_abs") is None:
            baseline_cost = compute_baseline_cost(merged)

    rows = []
    for method in methods:
        for k, seed in enumerate(seeds):
            ov = dict(overrides or {})
            ov["method"] = method
            if cfg0["domain"] == "racing" and method in ("nominal", "weighted"):
                grid = cfg0.get("mu_planned_grid", MU_PLANNED_GRID)
                ov["mu_planned"] = grid[k % len(grid)]
            summary, _ = run_scenario(path_or_name, seed, overrides=ov,
                                      baseline_cost=baseline_cost)
            rows.append(summary)
    if out_dir is not None:
        write_table(Path(out_dir), rows)
    return rows


# ---------------------------------------------------------------------------
# Output files


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.9g}"


def write_outputs(out: Path, cfg: dict, logbook: MissionLog, summary: MetricsSummary,
                  dirs: DirectionSet, budget_abs: float):
    out.mkdir(parents=True, exist_ok=True)
    n_dirs = len(dirs)

    with open(out / "epochs.csv", "w") as fh:
        cols = ["t_k", "tag", "horizon", "delta_xi", "score", "dJ_exp", "spent"]
        cols += [f"width_{j}" for j in range(n_dirs)]
        fh.write(",".join(cols) + "\n")
        for ep in logbook.epochs:
            row = [_fmt(ep.t_k), ep.tag, _fmt(ep.horizon), _fmt(ep.delta_xi),
                   _fmt(ep.score), _fmt(ep.d_j_exp), _fmt(ep.spent_after)]
            row += [_fmt(w) for w in ep.widths]
            fh.write(",".join(row) + "\n")

    with open(out / "trajectory.csv", "w") as fh:
        n = logbook.states.shape[1] if logbook.states is not None else 0
        m = logbook.inputs.shape[1] if logbook.inputs is not None else 0
        cols = ["t"] + [f"x{j}" for j in range(n)] + [f"u{j}" for j in range(m)] + ["epoch"]
        fh.write(",".join(cols) + "\n")
        if logbook.states is not None:
            T = len(logbook.inputs)
            for j in range(len(logbook.times)):
                uj = logbook.inputs[min(j, T - 1)]
                ej = logbook.epoch_of_step[min(j, T - 1)]
                row = ([_fmt(logbook.times[j])] + [_fmt(v) for v in logbook.states[j]]
                       + [_fmt(v) for v in uj] + [str(int(ej))])
                fh.write(",".join(row) + "\n")

    with open(out / "bounds.csv", "w") as fh:
        p = logbook.box0.dim if logbook.box0 is not None else 0
        cols = ["t"] + [c for j in range(p) for c in (f"lo_{j}", f"hi_{j}")]
        cols += [f"width_{j}" for j in range(n_dirs)]
        fh.write(",".join(cols) + "\n")
        for (t, lo, hi, widths) in logbook.bounds_history:
            row = [_fmt(t)]
            for j in range(p):
                row += [_fmt(lo[j]), _fmt(hi[j])]
            row += [_fmt(w) for w in widths]
            fh.write(",".join(row) + "\n")

    with open(out / "summary.json", "w") as fh:
        doc = summary.to_dict()
        doc["true_theta"] = [float(v) for v in logbook.true_theta]
        doc["box0"] = {"lo": logbook.box0.lo.tolist(), "hi": logbook.box0.hi.tolist()}
        if logbook.box_final is not None:
            doc["box_final"] = {"lo": logbook.box_final.lo.tolist(),
                                "hi": logbook.box_final.hi.tolist()}
        doc["violation_time"] = logbook.violation_time
        doc["aborted"] = logbook.aborted
        json.dump(doc, fh, indent=2, default=_json_default)
        fh.write("\n")

    mat = copy.deepcopy(cfg)
    mat["resolved_budget_abs"] = budget_abs
    if cfg["domain"] == "racing":
        track = stadium_track(**cfg.get("track", {}))
        mat["track_geometry"] = {"waypoints": track.waypoints.tolist(),
                                 "half_width": track.half_width}
    with open(out / "scenario.json", "w") as fh:
        json.dump(mat, fh, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


TABLE_COLUMNS = ["method", "seed", "mu_planned", "success", "safe_run", "first_lap_time",
                 "last_lap_time", "total_cost", "cost_pct_of_baseline",
                 "budget_consumed_pct", "reduction_pct_0"]


def write_table(out: Path, rows):
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "table.csv", "w") as fh:
        fh.write(",".join(TABLE_COLUMNS) + "\n")
        for r in rows:
            vals = [r.method, str(r.seed), _fmt(r.mu_planned),
                    _fmt(r.mission_complete and r.safe_run), _fmt(r.safe_run),
                    _fmt(r.first_lap_time), _fmt(r.last_lap_time), _fmt(r.total_cost),
                    _fmt(r.cost_pct_of_baseline), _fmt(r.budget_consumed_pct),
                    _fmt(r.uncertainty_reduction_pct[0] if r.uncertainty_reduction_pct else None)]
            fh.write(",".join(vals) + "\n")


# ---------------------------------------------------------------------------
# CLI


def _parse_args(argv):
    ap = argparse.ArgumentParser(prog="dualgate",
                                 description="budgeted dual-control benchmark runner")
    sub = ap.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one scenario trial")
    run_p.add_argument("--scenario", required=True, help="JSON path or builtin name")
    run_p.add_argument("--seed", type=int, required=True)
    run_p.add_argument("--method", default=None)
    run_p.add_argument("--out", required=True)
    run_p.add_argument("--budget-pct", type=float, default=None)
    run_p.add_argument("--rollouts", type=int, default=None,
                       help="override shrinkage rollout count")

    sweep_p = sub.add_parser("sweep", help="run a scenario over seeds x methods")
    sweep_p.add_argument("--scenario", required=True)
    sweep_p.add_argument("--seeds", required=True, help="comma-separated seed list")
    sweep_p.add_argument("--methods", required=True, help="comma-separated method list")
    sweep_p.add_argument("--out", required=True)
    sweep_p.add_argument("--budget-pct", type=float, default=None)
    return ap.parse_args(argv)


def main(argv=None) -> int:
    args = _parse_args(argv if argv is not None else sys.argv[1:])
    if args.command == "run":
        overrides = {}
        if args.method:
            overrides["method"] = args.method
        if args.budget_pct is not None:
            overrides["budget_pct"] = args.budget_pct
        if args.rollouts is not None:
            overrides["engine"] = {"n_shrinkage_rollouts": args.rollouts}
        summary, _ = run_scenario(args.scenario, args.seed, overrides=overrides,
                                  out_dir=args.out)
        print(json.dumps(summary.to_dict(), indent=2, default=_json_default))
        return 0
    if args.command == "sweep":
        overrides = {}
        if args.budget_pct is not None:
            overrides["budget_pct"] = args.budget_pct
        seeds = [int(s) for s in args.seeds.split(",") if s != ""]
        methods = [m for m in args.methods.split(",") if m != ""]
        rows = sweep(args.scenario, seeds, methods, out_dir=args.out, overrides=overrides)
        safe = sum(1 for r in rows if r.safe_run)
        print(f"trials={len(rows)} safe={safe}")
        for r in rows:
            print(f"  {r.method} seed={r.seed} safe={r.safe_run} "
                  f"complete={r.mission_complete} cost={r.total_cost:.6g}")
        return 0
    return 1


if __name__ == "__main__":
    raise SystemExit(main())
