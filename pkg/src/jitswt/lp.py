"""Dense two-phase simplex with Bland's anti-cycling rule.

Solves max/min c^T x subject to A x <= b with free x, via the split
x = u - v, u, v >= 0 and slack variables. Deterministic by construction:
entering variable is the smallest improving index, leaving variable breaks
ratio ties by smallest basic index. The pivot budget defaults to
10 * (rows + columns); exceeding it raises NumericalFailure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalFailure

RC_TOL = 1e-9  # reduced-cost threshold
PIV_TOL = 1e-9  # smallest usable pivot element
FEAS_TOL = 1e-8  # phase-1 residual treated as infeasible beyond this


@dataclass
class LpResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    value: float | None = None
    x: np.ndarray | None = None


def _pivot(t: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    t[row] /= t[row, col]
    column = t[:, col].copy()
    column[row] = 0.0
    t -= np.outer(column, t[row])
    basis[row] = col


def _run_simplex(
    t: np.ndarray,
    basis: np.ndarray,
    cost: np.ndarray,
    allowed_cols: int,
    pivots_left: int,
) -> tuple[str, int]:
    """Maximize cost over the tableau in place. Returns (status, pivots_left)."""
    m = t.shape[0]
    row_idx = np.arange(m)
    while True:
        reduced = cost[:allowed_cols] - cost[basis] @ t[:, :allowed_cols]
        improving = np.nonzero(reduced > RC_TOL)[0]
        if improving.size == 0:
            return "optimal", pivots_left
        col = int(improving[0])  # Bland: smallest improving index
        direction = t[:, col]
        usable = direction > PIV_TOL
        if not np.any(usable):
            return "unbounded", pivots_left
        ratios = np.full(m, np.inf)
        ratios[usable] = t[usable, -1] / direction[usable]
        best = ratios.min()
        ties = row_idx[np.isclose(ratios, best, rtol=0.0, atol=1e-12)]
        row = int(ties[np.argmin(basis[ties])])  # Bland tie-break
        if pivots_left <= 0:
            raise NumericalFailure("simplex pivot limit exceeded")
        _pivot(t, basis, row, col)
        pivots_left -= 1


def solve_lp(
    c: np.ndarray,
    a_ub: np.ndarray,
    b_ub: np.ndarray,
    sense: str = "max",
    pivot_limit: int | None = None,
) -> LpResult:
    """Optimize c^T x over {x : a_ub x <= b_ub} with x free."""
    c = np.asarray(c, dtype=float)
    a = np.asarray(a_ub, dtype=float).reshape(-1, c.size)
    b = np.asarray(b_ub, dtype=float).reshape(-1)
    if sense == "min":
        res = solve_lp(-c, a, b, "max", pivot_limit)
        if res.status == "optimal":
            res.value = -res.value
        return res
    m, n = a.shape
    if m == 0:
        if np.linalg.norm(c) > 0:
            return LpResult("unbounded")
        return LpResult("optimal", 0.0, np.zeros(n))

    # Standard form columns: [u, v, slack]; rhs made nonnegative row-wise.
    d = np.hstack([a, -a, np.eye(m)])
    rhs = b.copy()
    neg = rhs < 0
    d[neg] *= -1.0
    rhs[neg] *= -1.0
    n_struct = d.shape[1]
    art_rows = np.nonzero(neg)[0]
    total = n_struct + art_rows.size

    t = np.zeros((m, total + 1))
    t[:, :n_struct] = d
    t[:, -1] = rhs
    basis = np.empty(m, dtype=int)
    nxt = n_struct
    for i in range(m):
        if neg[i]:
            t[i, nxt] = 1.0
            basis[i] = nxt
            nxt += 1
        else:
            basis[i] = 2 * n + i

    budget = pivot_limit if pivot_limit is not None else 10 * (m + total)

    if art_rows.size:
        phase1 = np.zeros(total)
        phase1[n_struct:] = -1.0
        status, budget = _run_simplex(t, basis, phase1, total, budget)
        if status != "optimal":
            raise NumericalFailure("phase 1 reported unbounded")
        if -(phase1[basis] @ t[:, -1]) > FEAS_TOL:
            return LpResult("infeasible")
        # Drive remaining zero-level artificials out of the basis.
        for i in range(m):
            if basis[i] >= n_struct:
                cols = np.nonzero(np.abs(t[i, :n_struct]) > PIV_TOL)[0]
                if cols.size:
                    if budget <= 0:
                        raise NumericalFailure("simplex pivot limit exceeded")
                    _pivot(t, basis, i, int(cols[0]))
                    budget -= 1
                # else: redundant row, harmless at level zero

    phase2 = np.zeros(total)
    phase2[:n] = c
    phase2[n : 2 * n] = -c
    status, budget = _run_simplex(t, basis, phase2, n_struct, budget)
    if status == "unbounded":
        return LpResult("unbounded")

    vals = np.zeros(total)
    vals[basis] = t[:, -1]
    x = vals[:n] - vals[n : 2 * n]
    return LpResult("optimal", float(c @ x), x)


class DenseSimplex:
    """Default LP backend wrapping solve_lp (the swappable oracle)."""

    def solve(
        self,
        c: np.ndarray,
        a_ub: np.ndarray,
        b_ub: np.ndarray,
        sense: str = "max",
    ) -> LpResult:
        return solve_lp(c, a_ub, b_ub, sense)
