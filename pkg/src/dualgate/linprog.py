"""Small dense linear programs behind a fixed facade.

The solver backend is scipy's HiGHS dual simplex; everything downstream
depends only on the contract here (vertex-exact optima, residuals below
TOL, statuses instead of exceptions), so the backend can be swapped.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import optimize

TOL = 1e-8


class LPStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass
class LinearProgram:
    """minimize c @ x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lo <= x <= hi."""

    c: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        q = self.c.size
        for name in ("A_ub", "A_eq"):
            mat = getattr(self, name)
            if mat is not None:
                mat = np.atleast_2d(np.asarray(mat, dtype=float))
                if mat.shape[1] != q:
                    raise ValueError(f"{name} must have {q} columns")
                setattr(self, name, mat)
        if self.A_ub is not None:
            self.b_ub = np.asarray(self.b_ub, dtype=float).ravel()
        if self.A_eq is not None:
            self.b_eq = np.asarray(self.b_eq, dtype=float).ravel()

    def bounds_list(self):
        q = self.c.size
        lo = np.full(q, -np.inf) if self.lo is None else np.asarray(self.lo, dtype=float)
        hi = np.full(q, np.inf) if self.hi is None else np.asarray(self.hi, dtype=float)
        return [(None if not np.isfinite(l) else l, None if not np.isfinite(h) else h) for l, h in zip(lo, hi)]


@dataclass
class LPSolution:
    status: LPStatus
    optimal: np.ndarray | None = None
    value: float | None = None
    slack_residual: float = 0.0


def solve_lp(lp: LinearProgram) -> LPSolution:
    """Solve a small dense LP; infeasible/unbounded come back as statuses."""
    res = optimize.linprog(
        lp.c,
        A_ub=lp.A_ub,
        b_ub=lp.b_ub,
        A_eq=lp.A_eq,
        b_eq=lp.b_eq,
        bounds=lp.bounds_list(),
        method="highs-ds",
    )
    if res.status == 2:
        return LPSolution(LPStatus.INFEASIBLE)
    if res.status == 3:
        return LPSolution(LPStatus.UNBOUNDED)
    if res.status != 0:
        raise RuntimeError(f"LP backend failure: {res.message}")
    return LPSolution(
        LPStatus.OPTIMAL,
        optimal=np.asarray(res.x),
        value=float(res.fun),
        slack_residual=complementary_slackness_residual(lp, res),
    )


def complementary_slackness_residual(lp: LinearProgram, res) -> float:
    """max_i |lambda_i * slack_i| over the inequality rows (0 when none)."""
    if lp.A_ub is None:
        return 0.0
    slack = lp.b_ub - lp.A_ub @ res.x
    marginals = np.asarray(res.ineqlin.marginals)
    return float(np.max(np.abs(marginals * slack), initial=0.0))


@dataclass
class L1Preimage:
    status: LPStatus
    l1: float = np.inf
    lam: np.ndarray | None = None


def min_l1_preimage(Amat: np.ndarray, d: np.ndarray) -> L1Preimage:
    """min ||lam||_1 subject to Amat.T @ lam = d.

    Solved by the standard split lam = lam_plus - lam_minus; infeasible
    exactly when d is outside the row space of Amat.
    """
    A = np.atleast_2d(np.asarray(Amat, dtype=float))
    d = np.asarray(d, dtype=float).ravel()
    M = A.shape[0]
    if A.shape[1] != d.size:
        raise ValueError("Amat columns must match d")
    lp = LinearProgram(
        c=np.ones(2 * M),
        A_eq=np.hstack([A.T, -A.T]),
        b_eq=d,
        lo=np.zeros(2 * M),
    )
    sol = solve_lp(lp)
    if sol.status is not LPStatus.OPTIMAL:
        return L1Preimage(sol.status)
    lam = sol.optimal[:M] - sol.optimal[M:]
    return L1Preimage(LPStatus.OPTIMAL, l1=float(sol.value), lam=lam)
