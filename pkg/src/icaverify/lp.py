"""LP feasibility over a box by phase-one dense simplex with Bland's rule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .query import Box, LinearConstraint

FEAS_TOL = 1e-7
INFEAS_TOL = 1e-9
PIVOT_TOL = 1e-11
MAX_PIVOTS = 100_000


class LPInstabilityError(RuntimeError):
    """Pivoting did not terminate within the iteration cap."""


@dataclass
class LPProblem:
    box: Box
    constraints: list[LinearConstraint] = field(default_factory=list)

    def as_le(self):
        n = self.box.dim
        if not self.constraints:
            return np.zeros((0, n)), np.zeros(0)
        rows = [c.as_le() for c in self.constraints]
        return np.array([r[0] for r in rows]).reshape(-1, n), np.array([r[1] for r in rows])


@dataclass
class LPResult:
    feasible: bool
    witness: np.ndarray | None = None
    pivots: int = 0

    def __bool__(self):
        return self.feasible


def lp_feasible(p: LPProblem) -> LPResult:
    a, b = p.as_le()
    return feasible_le(p.box.lower, p.box.upper, a, b)


def feasible_le(lower, upper, a, b) -> LPResult:
    """Is there ``lower <= x <= upper`` with ``a @ x <= b``?"""
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64).reshape(-1, lower.shape[0])
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    n = lower.shape[0]
    width = upper - lower

    # shift to s = x - lower >= 0
    rhs = b - a @ lower
    norms = np.abs(a).max(axis=1) if a.size else np.zeros(0)
    keep = norms > 0.0
    if np.any(rhs[~keep] < -INFEAS_TOL):
        return LPResult(False)
    a, rhs, norms = a[keep], rhs[keep], norms[keep]
    a = a / norms[:, None]
    rhs = rhs / norms

    # box upper bounds become ordinary rows, except pinned dimensions
    free = width > 0.0
    rows_a = np.vstack([a[:, free], np.eye(n)[free][:, free]])
    rows_b = np.concatenate([rhs, width[free]])
    s_free, pivots = _phase_one(rows_a, rows_b)
    if s_free is None:
        return LPResult(False, pivots=pivots)
    x = lower.copy()
    x[free] += s_free
    x = np.clip(x, lower, upper)
    return LPResult(True, x, pivots)


def _phase_one(a: np.ndarray, b: np.ndarray):
    """Find ``s >= 0`` with ``a @ s <= b``; returns (s or None, pivot count)."""
    m, n = a.shape
    if n == 0:
        return (np.zeros(0), 0) if np.all(b >= -INFEAS_TOL) else (None, 0)
    neg = b < 0.0
    k = int(neg.sum())
    ncol = n + m + k
    t = np.zeros((m + 1, ncol + 1))
    t[:m, :n] = a
    t[:m, n : n + m] = np.eye(m)
    t[:m, -1] = b
    t[:m][neg] *= -1.0
    basis = np.arange(n, n + m)
    art_rows = np.flatnonzero(neg)
    for j, i in enumerate(art_rows):
        t[i, n + m + j] = 1.0
        basis[i] = n + m + j
    # objective row holds reduced costs of  min sum(artificials)
    t[m, :] = -t[art_rows].sum(axis=0)
    t[m, n + m :ncol] = 0.0

    pivots = 0
    while True:
        cost = t[m, :ncol]
        entering = np.flatnonzero(cost < -PIVOT_TOL)
        if entering.size == 0:
            break
        j = int(entering[0])
        col = t[:m, j]
        cand = np.flatnonzero(col > PIVOT_TOL)
        if cand.size == 0:
            # the phase-one objective is bounded below by zero
            raise LPInstabilityError("unbounded direction in phase one")
        ratios = t[cand, -1] / col[cand]
        best = ratios.min()
        ties = cand[ratios <= best + 1e-12 * max(1.0, abs(best))]
        i = int(ties[np.argmin(basis[ties])])
        t[i] /= t[i, j]
        factors = t[:, j].copy()
        factors[i] = 0.0
        t -= np.outer(factors, t[i])
        basis[i] = j
        pivots += 1
        if pivots > MAX_PIVOTS:
            raise LPInstabilityError(f"simplex exceeded {MAX_PIVOTS} pivots")

    if -t[m, -1] > INFEAS_TOL:
        return None, pivots
    s = np.zeros(ncol)
    s[basis] = t[:m, -1]
    return np.maximum(s[:n], 0.0), pivots


def check_witness(lower, upper, a, b, x, tol=FEAS_TOL) -> bool:
    x = np.asarray(x)
    if np.any(x < lower - tol) or np.any(x > upper + tol):
        return False
    return bool(np.all(np.asarray(a) @ x <= np.asarray(b) + tol)) if len(b) else True
