"""Budget-constrained dual control with gatekeeper safety verification.

Robust mission execution under bounded parametric uncertainty: exploration
segments are committed only when certified safe and affordable within a
mission-cost budget, while set-membership identification shrinks the
feasible parameter box online.
"""

from .engine import (
    BudgetLedger,
    CandidateRecord,
    CommitDecision,
    EngineConfig,
    MissionLog,
    QuadRuntime,
    RaceRuntime,
    candidate_horizons,
    commit,
    exploration_cost,
    feasible_set,
    run_quad_mission,
    run_race_mission,
    score_candidate,
)
from .models import (
    Box,
    ModelSpec,
    RegressionTuple,
    Trajectory,
    drag_quadrotor,
    eval_dynamics,
    integrate_step,
    make_regression_tuple,
    simulate_closed_loop,
    vector_drag_quadrotor,
)
from .smid import (
    DirectionSet,
    HistoryStack,
    ParameterBox,
    avg_width_reduction,
    calibrate_eps,
    check_fe,
    smid_update,
    try_admit,
    width,
)

__version__ = "0.1.0"
