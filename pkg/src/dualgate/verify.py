"""Gatekeeper safety verification and tube-based candidate validation.

Monte-Carlo verification simulates a candidate policy (segment, then the
fallback) under parameters sampled from the uncertainty box and bounded
disturbances; a rollout is safe when every state/input constraint holds
over the whole verification horizon and the terminal state lands in the
fallback set.  Tube validation wraps the informative trajectory in a
sampled tube and checks the inflated envelope against the constraints.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ContractViolationError
from .models import ModelSpec, Trajectory, rollout_batch, sample_disturbances
from .planners import AncillaryGains, estimate_tube
from .smid import ParameterBox


@dataclass
class SafetyVerdict:
    p_safe: float
    n_rollouts: int
    n_safe: int
    accepted: bool
    failure_modes: dict = field(default_factory=dict)


@dataclass
class FallbackSpec:
    """Fallback policy handoff for verification rollouts."""

    policy_factory: Callable[[], Callable]
    T_fb: float
    fallback_set: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self):
        if self.T_fb <= 0:
            raise ContractViolationError("fallback horizon must be positive")


@dataclass
class RolloutData:
    """Raw verification rollouts, reused for predicted-cost estimation."""

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    safe: np.ndarray
    state_ok: np.ndarray
    aux: object = None


def _default_state_check(model):
    def check(states):
        return model.state_bounds.contains(states), None

    return check


def verify_rollouts(
    model: ModelSpec,
    candidate_policy,
    x_k,
    box: ParameterBox,
    fb: FallbackSpec,
    n: int,
    delta: float,
    seed,
    horizon: float,
    dt: float = 0.02,
    state_check=None,
) -> tuple[SafetyVerdict, RolloutData]:
    """Monte-Carlo verification returning the verdict plus raw rollouts.

    candidate_policy must already be the full policy over the verification
    horizon (segment then fallback); state_check maps rollout states
    (B, T+1, n) to an admissibility mask and optional auxiliary data.
    """
    if n < 1 or not (0.0 < delta < 1.0):
        raise ContractViolationError("need n >= 1 and delta in (0, 1)")
    rng = np.random.default_rng(seed)
    n_steps = max(1, int(round((horizon + fb.T_fb) / dt)))
    thetas = box.sample(rng, n)
    w_seqs = sample_disturbances(model, n_steps, rng, batch=n)
    times, states, inputs, alive = rollout_batch(model, candidate_policy, x_k, n_steps, dt,
                                                 thetas, w_seqs)
    check = state_check or _default_state_check(model)
    ok_path, aux = check(states)
    ok_path = ok_path & alive[:, None]
    state_ok = np.all(ok_path, axis=1)
    input_ok = np.all(model.input_bounds.contains(inputs, tol=1e-9), axis=1)
    terminal_ok = np.asarray(fb.fallback_set(states[:, -1]), dtype=bool)
    safe = state_ok & input_ok & terminal_ok

    n_safe = int(np.sum(safe))
    p_safe = n_safe / n
    verdict = SafetyVerdict(
        p_safe=p_safe,
        n_rollouts=n,
        n_safe=n_safe,
        accepted=p_safe >= 1.0 - delta,
        failure_modes={
            "state-constraint": int(np.sum(~state_ok)),
            "input-constraint": int(np.sum(state_ok & ~input_ok)),
            "terminal-fallback-set": int(np.sum(state_ok & input_ok & ~terminal_ok)),
        },
    )
    return verdict, RolloutData(times, states, inputs, safe, ok_path, aux)


def verify_policy(
    model: ModelSpec,
    candidate_policy,
    x_k,
    box: ParameterBox,
    fb: FallbackSpec,
    n: int,
    delta: float,
    seed,
    horizon: float,
    dt: float = 0.02,
    state_check=None,
) -> SafetyVerdict:
    """Empirical safety probability of a candidate policy (accept at 1 - delta)."""
    verdict, _ = verify_rollouts(model, candidate_policy, x_k, box, fb, n, delta, seed,
                                 horizon, dt=dt, state_check=state_check)
    return verdict


@dataclass
class TubeCheck:
    valid: bool
    tube_radii: np.ndarray
    input_radii: np.ndarray


def verify_tube_candidate(
    model: ModelSpec,
    informative: Trajectory,
    box: ParameterBox,
    world,
    gains: AncillaryGains,
    seed,
    n_rollouts: int = 100,
    inflation: float = 1.2,
    floor: float = 0.02,
) -> TubeCheck:
    """Sampled-tube validity of an informative trajectory.

    Estimates tracking-deviation radii around the trajectory under the
    ancillary feedback, then requires the inflated envelope to stay inside
    the state constraints and the ancillary input headroom to stay inside
    the input box.  This realizes the robustified informative segment.
    """
    rng = np.random.default_rng(seed)
    radii, u_radii, alive = estimate_tube(model, informative, gains, box, n_rollouts, rng,
                                          inflation=inflation, floor=floor)
    state_ok = bool(np.all(world.state_ok(informative.states, radii=radii)))
    input_ok = bool(
        np.all(informative.inputs >= model.input_bounds.lo + u_radii - 1e-9)
        and np.all(informative.inputs <= model.input_bounds.hi - u_radii + 1e-9)
    )
    return TubeCheck(alive and state_ok and input_ok, radii, u_radii)
