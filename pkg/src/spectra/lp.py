"""Dense revised simplex for ``max c.x  s.t.  A x = b, x >= 0``.

Built for problems with few rows and many columns (one row per budget and
per sub-channel, one column per candidate PSD point).  The basis matrix is
re-solved from scratch every iteration, which is cheap at this row count and
avoids drift.  Pricing is Dantzig's rule with lowest-index ties; after a run
of degenerate pivots it switches to Bland's rule, so the pivot sequence (and
hence the returned vertex) is fully deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class LPError(RuntimeError):
    pass


class Infeasible(LPError):
    pass


class Unbounded(LPError):
    pass


@dataclass
class LPResult:
    x: np.ndarray
    value: float
    duals: np.ndarray
    basis: np.ndarray
    iterations: int
    rows_kept: np.ndarray


def _solve_phase(c, A, b, basis, allowed, tol, max_iter, bland_after):
    m, n = A.shape
    it = 0
    degenerate = 0
    while True:
        B = A[:, basis]
        xB = np.linalg.solve(B, b)
        y = np.linalg.solve(B.T, c[basis])
        d = c - A.T @ y
        d[basis] = 0.0
        d[~allowed] = 0.0
        cand = np.nonzero(d > tol)[0]
        if cand.size == 0:
            return basis, xB, y, it
        if it >= max_iter:
            raise LPError(f"simplex did not converge in {max_iter} iterations")
        if degenerate >= bland_after:
            j = cand[0]
        else:
            j = cand[np.argmax(d[cand])]   # argmax returns the lowest index on ties
        u = np.linalg.solve(B, A[:, j])
        pos = u > tol
        if not np.any(pos):
            raise Unbounded(f"LP unbounded along column {j}")
        ratios = np.full(m, np.inf)
        ratios[pos] = np.maximum(xB[pos], 0.0) / u[pos]
        rmin = ratios.min()
        ties = np.nonzero(ratios <= rmin + tol * max(1.0, rmin))[0]
        r = ties[np.argmin(basis[ties])]   # Bland's leaving rule
        degenerate = degenerate + 1 if rmin <= tol else 0
        basis = basis.copy()
        basis[r] = j
        it += 1


def simplex(c, A, b, basis=None, tol=1e-10, max_iter=100000, bland_after=50) -> LPResult:
    """Solve ``max c.x`` over ``{x >= 0 : A x = b}``.

    Parameters
    ----------
    basis : sequence of column indices, optional
        A feasible starting basis.  Without one, a phase-one problem with
        artificial columns is solved first; redundant rows are dropped.
    """
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    rows = np.arange(m)
    sign = np.ones(m)
    total_it = 0
    if basis is None:
        sign = np.where(b < 0, -1.0, 1.0)
        A1 = np.hstack([A * sign[:, None], np.eye(m)])
        b1 = b * sign
        c1 = np.concatenate([np.zeros(n), -np.ones(m)])
        allowed = np.ones(n + m, bool)
        basis1 = np.arange(n, n + m)
        basis1, xB, _, it = _solve_phase(c1, A1, b1, basis1, allowed, tol, max_iter,
                                         bland_after)
        total_it += it
        if xB[basis1 >= n].sum() > 1e-8 * max(1.0, np.abs(b).max()):
            raise Infeasible("LP has no feasible point")
        # pivot zero-level artificials out, or drop their rows as redundant
        keep = np.ones(m, bool)
        for r in range(m):
            if basis1[r] < n:
                continue
            B = A1[:, basis1]
            row = np.linalg.solve(B.T, np.eye(m)[r]) @ A1[:, :n]
            row[basis1[basis1 < n]] = 0.0
            cols = np.nonzero(np.abs(row) > 1e-9)[0]
            if cols.size:
                basis1 = basis1.copy()
                basis1[r] = cols[0]
            else:
                keep[r] = False
        A = A1[keep, :n]
        b = b1[keep]
        rows = rows[keep]
        basis = basis1[keep]
        if np.any(basis >= n):
            raise LPError("could not remove artificial columns from the basis")
    else:
        basis = np.asarray(basis, dtype=int)
        if basis.size != m:
            raise ValueError("starting basis must have one column per row")
    allowed = np.ones(n, bool)
    basis, xB, y, it = _solve_phase(c, A, b, basis, allowed, tol, max_iter, bland_after)
    total_it += it
    if np.any(xB < -1e-8 * max(1.0, np.abs(b).max())):
        raise Infeasible("starting basis was not primal feasible")
    x = np.zeros(n)
    x[basis] = np.maximum(xB, 0.0)
    duals = np.zeros(m)
    duals[rows] = y * sign[rows]   # undo the phase-one row sign flips
    return LPResult(x, float(c @ x), duals, basis, total_it, rows)
