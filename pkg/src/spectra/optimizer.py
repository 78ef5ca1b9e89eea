"""Weighted sum-rate maximization over piecewise-flat spectrum allocations.

Each flat sub-channel contributes its concave envelope ``R*_m``.  On the hull
grid, maximizing ``sum_m b_m R*_m(P_m)`` under the power budgets is a linear
program over convex-combination weights ``c_mk`` of grid points:

    max   sum_m b_m sum_k c_mk R(P_k)
    s.t.  sum_m b_m sum_k c_mk P_k <= p,   sum_k c_mk = 1,   c >= 0.

A basic optimal solution has at most ``K + M`` nonzero weights, so no
sub-channel uses more than ``K + 1`` points.  Each point becomes a flat
sub-band of width ``b_m c_mk``; the resulting allocation achieves the LP
value exactly, since the columns are actual grid PSDs with their true rates.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSpec, Piece, SpectrumAllocation, total_rates
from .envelope import (CaratheodoryDecomposition, GridConfig, HullCache, HullFunction,
                       build_hulls)
from .lp import simplex


@dataclass(frozen=True)
class SolverConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    tol: float = 1e-10
    max_iter: int = 200000
    threads: int | None = None


@dataclass(frozen=True, eq=False)
class OptimizationResult:
    value: float
    allocation: SpectrumAllocation
    rates: np.ndarray
    powers: np.ndarray
    prices: np.ndarray
    gap: float
    decompositions: tuple
    diagnostics: dict

    def to_json(self):
        return {
            "value": self.value,
            "rates": self.rates.tolist(),
            "powers": self.powers.tolist(),
            "prices": self.prices.tolist(),
            "gap": self.gap,
            "pieces_per_subchannel": [len(d.weights) for d in self.decompositions],
            "allocation": self.allocation.to_json(),
            "diagnostics": self.diagnostics,
        }


def _columns(hull: HullFunction):
    """Candidate grid indices (the zero point always first)."""
    cand = hull.candidates()
    return np.unique(np.concatenate([[0], cand]))


def caratheodory_reduce(points, weights, values, tol=1e-12):
    """Shrink a convex combination to at most ``dim + 1`` points.

    Moves along null-space directions of ``[points^T; 1]`` in the sign that
    does not lower ``weights @ values``, so the mixture point is preserved
    and the mixed value never decreases.
    """
    P = np.asarray(points, float)
    w = np.asarray(weights, float).copy()
    v = np.asarray(values, float)
    active = np.nonzero(w > tol)[0]
    dim = P.shape[1]
    while active.size > dim + 1:
        A = np.vstack([P[active].T, np.ones(active.size)])
        d = np.linalg.svd(A)[2][-1]
        if d @ v[active] < 0:
            d = -d
        # step along -d until a weight hits zero (d has negative entries as sum d = 0)
        neg = d < -tol
        if not np.any(neg):
            d = -d
            neg = d < -tol
        t = np.min(w[active][neg] / -d[neg])
        w[active] += t * d
        w[np.abs(w) < tol] = 0.0
        w = np.maximum(w, 0.0)
        active = np.nonzero(w > tol)[0]
    w[w <= tol] = 0.0
    return w / w.sum()


def reconstruct_allocation(spec: ChannelSpec, decompositions) -> SpectrumAllocation:
    """Lay the decomposition pieces out inside each sub-channel.

    Pieces are ordered by descending weight with ties broken by vertex index;
    widths are ``b_m c_k`` and the last piece ends exactly on the sub-channel
    edge, so widths partition the sub-channel.
    """
    if len(decompositions) != spec.M:
        raise ValueError(f"need {spec.M} decompositions, got {len(decompositions)}")
    edges = spec.edges
    pieces = []
    for m, d in enumerate(decompositions):
        w = np.asarray(d.weights, float)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"sub-channel {m}: weights must be non-negative and sum to 1")
        order = sorted(range(len(w)), key=lambda k: (-w[k], d.vertex_ids[k]))
        order = [k for k in order if w[k] > 0]
        start = edges[m]
        acc = 0.0
        for n, k in enumerate(order):
            acc += w[k]
            end = edges[m + 1] if n == len(order) - 1 else edges[m] + spec.bandwidths[m] * acc
            if end <= start:
                continue
            pieces.append(Piece(float(start), float(end),
                                tuple(float(x) for x in d.witnesses[k])))
            start = end
    return SpectrumAllocation(tuple(pieces))


def _tilted_max(hull: HullFunction, lam):
    pts = hull.points
    raw = hull.grid_values - pts @ lam
    k = int(np.argmax(raw))
    verts = hull.vertices
    env = float(np.max(hull.ext_values[verts] - pts[verts] @ lam))
    return float(raw[k]), k, env


def dual_value(spec: ChannelSpec, hulls, lam, check=True):
    """Lagrange dual function on the hull grid.

    Returns ``(g, argmax_points)`` with ``g = sum_m b_m max_P [R_m(P) - lam.P]
    + lam.p``.  With ``check`` the same quantity is recomputed from the
    envelope values and the two must agree.
    """
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (spec.K,):
        raise ValueError(f"prices must have shape ({spec.K},)")
    if np.any(lam < 0):
        raise ValueError("prices must be non-negative")
    g = ghat = float(lam @ spec.budgets)
    argmax = []
    for m, h in enumerate(hulls):
        raw, k, env = _tilted_max(h, lam)
        g += spec.bandwidths[m] * raw
        ghat += spec.bandwidths[m] * env
        argmax.append(h.point(k))
    if check and abs(g - ghat) > 1e-9 * (1.0 + abs(g)):
        raise AssertionError(f"dual mismatch: raw {g!r} vs envelope {ghat!r}")
    return g, argmax


def solve(spec: ChannelSpec, hulls=None, config: SolverConfig | None = None,
          cache: HullCache | None = None) -> OptimizationResult:
    """Maximize the weighted sum-rate over piecewise-flat allocations."""
    config = config or SolverConfig()
    if hulls is None:
        hulls = build_hulls(spec, config.grid, cache=cache, threads=config.threads)
    if len(hulls) != spec.M:
        raise ValueError(f"need one hull per sub-channel ({spec.M}), got {len(hulls)}")
    K, M = spec.K, spec.M
    if any(h.grid_values.size == 0 for h in hulls):
        raise ValueError("empty hull")

    cols, cost, A_cols = [], [], []
    for m, h in enumerate(hulls):
        idx = _columns(h)
        pts = h.point(idx)
        cols.append(idx)
        cost.append(spec.bandwidths[m] * h.grid_values[idx])
        A_cols.append(spec.bandwidths[m] * pts)
    starts = np.cumsum([0] + [c.size for c in cols])
    n = int(starts[-1])
    A = np.zeros((K + M, n + K))
    for m in range(M):
        A[:K, starts[m]:starts[m + 1]] = A_cols[m].T
        A[K + m, starts[m]:starts[m + 1]] = 1.0
    A[:K, n:] = np.eye(K)
    c = np.concatenate([np.concatenate(cost), np.zeros(K)])
    b = np.concatenate([spec.budgets, np.ones(M)])
    # feasible start: slacks on the budget rows, zero-power points on the others
    basis = np.concatenate([n + np.arange(K), starts[:-1]])
    res = simplex(c, A, b, basis=basis, tol=config.tol, max_iter=config.max_iter)
    lam = np.maximum(res.duals[:K], 0.0)

    decomps = []
    n_active = []
    for m, h in enumerate(hulls):
        x = res.x[starts[m]:starts[m + 1]]
        nz = np.nonzero(x > 0)[0]
        ids = cols[m][nz]
        w = x[nz]
        n_active.append(int(nz.size))
        if ids.size > K + 1:
            w = caratheodory_reduce(h.point(ids), w, h.grid_values[ids])
            keep = w > 0
            ids, w = ids[keep], w[keep]
        w = w / w.sum()
        pts = h.point(ids)
        decomps.append(CaratheodoryDecomposition(
            w, pts, h.grid_values[ids], pts, tuple(int(i) for i in ids)))
    alloc = reconstruct_allocation(spec, decomps)
    rates = total_rates(spec, alloc)
    value = float(spec.weights @ rates)
    powers = alloc.powers()
    g, _ = dual_value(spec, hulls, lam)
    slack = spec.budgets - powers
    diagnostics = {
        "lp_value": res.value,
        "iterations": res.iterations,
        "columns": n,
        "primal_residual": float(np.max(np.abs(A @ res.x - b))),
        "complementary_slackness": float(np.max(np.abs(lam * slack))),
        "grid_tolerance": float(sum(spec.bandwidths[m] * h.tolerance
                                    for m, h in enumerate(hulls))),
        "active_points": n_active,
        "columns_per_subchannel": [int(x.size) for x in cols],
    }
    return OptimizationResult(value, alloc, rates, powers, lam, float(g - value),
                              tuple(decomps), diagnostics)


__all__ = ["SolverConfig", "OptimizationResult", "solve", "dual_value",
           "reconstruct_allocation", "caratheodory_reduce"]
