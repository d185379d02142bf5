"""Scenario constraint worlds: corridor-with-obstacles and race track.

A world knows which states are admissible, how to tighten its constraints
by per-time tube radii, and how to score constraint violations as smooth
penalties for the sampling planners.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .models import Box, ModelSpec
from .racing import Track


@dataclass(frozen=True)
class BoxObstacle:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))

    def inside(self, pos, margin=0.0):
        """True where pos is strictly within the margin-inflated box."""
        return np.all((pos > self.lo - margin) & (pos < self.hi + margin), axis=-1)

    def penetration(self, pos, margin=0.0):
        """Depth of intrusion into the inflated box, 0 outside."""
        depth = np.minimum(pos - (self.lo - margin), (self.hi + margin) - pos)
        return np.clip(np.min(depth, axis=-1), 0.0, None)


@dataclass
class QuadWorld:
    """Position box with box obstacles and a spherical goal region."""

    state_box: Box
    obstacles: list = field(default_factory=list)
    goal: np.ndarray = None
    goal_radius: float = 0.5

    def __post_init__(self):
        self.goal = np.asarray(self.goal, dtype=float)

    def state_ok(self, states, radii=None):
        """Admissibility mask for (..., 6) states.

        With per-time radii (matching the trailing time/state layout), the
        box is shrunk and the obstacles are inflated by the position radii,
        which is the tightened-constraint test for a tube centerline.
        """
        pos = states[..., :3]
        if radii is None:
            ok = self.state_box.contains(states)
            for obs in self.obstacles:
                ok &= ~obs.inside(pos)
            return ok
        lo = self.state_box.lo + radii
        hi = self.state_box.hi - radii
        ok = np.all((states >= lo) & (states <= hi), axis=-1)
        for obs in self.obstacles:
            ok &= ~obs.inside(pos, margin=radii[..., :3])
        return ok

    def penalty(self, states, radii=None):
        """Squared violation depth, summed over obstacles and box faces."""
        pos = states[..., :3]
        r = 0.0 if radii is None else radii
        lo = self.state_box.lo + r
        hi = self.state_box.hi - r
        below = np.clip(lo - states, 0.0, None)
        above = np.clip(states - hi, 0.0, None)
        pen = np.sum(below**2 + above**2, axis=-1)
        margin = 0.0 if radii is None else radii[..., :3]
        for obs in self.obstacles:
            pen = pen + obs.penetration(pos, margin=margin) ** 2
        return pen

    def goal_reached(self, state, slack: float = 0.0):
        return np.linalg.norm(state[..., :3] - self.goal, axis=-1) <= self.goal_radius + slack

    def goal_distance(self, states):
        return np.linalg.norm(states[..., :3] - self.goal, axis=-1)


@dataclass
class RaceWorld:
    """Track corridor plus the car state box."""

    track: Track
    state_box: Box
    boundary_margin: float = 0.0

    def corridor_halfwidth(self) -> float:
        return self.track.half_width - self.boundary_margin

    def sweep_states(self, states, hint0=None):
        """Per-step track frames along rollouts with warm-started projection.

        Args:
            states: (B, T+1, 7) rollout states.

        Returns:
            (ok, s, e_y, idx): admissibility mask (B, T+1), arc-length and
            lateral offset paths, and the final projection indices.
        """
        s, e_y, idx_path = self.track.sweep(states[..., :2], hint0=hint0)
        ok = np.abs(e_y) <= self.corridor_halfwidth()
        ok &= self.state_box.contains(states)
        return ok, s, e_y, idx_path

    def state_ok(self, states, hint=None):
        s, e_y, idx = self.track.project(states[..., :2], hint=hint)
        return (np.abs(e_y) <= self.corridor_halfwidth()) & self.state_box.contains(states)
