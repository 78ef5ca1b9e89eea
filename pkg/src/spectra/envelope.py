"""Concave envelope of the weighted sum-rate over flat PSD vectors.

For one flat sub-channel the weighted sum-rate ``R(P)`` is sampled on a
tensor grid covering ``[0, U_1] x ... x [0, U_K]``.  Before hulling, every
grid value is replaced by the best value over the grid points it dominates
(``max_{P' <= P} R(P')``), remembering which point attained it.  The upper
concave envelope of those values is then concave and componentwise
nondecreasing; its facets give evaluation as a minimum of affine functions,
and the facet containing a query point gives at most ``K + 1`` points whose
convex combination reproduces it.
"""
from __future__ import annotations

import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .channel import ChannelSpec, rate_density
from .kernels import weighted_rates
from .lp import simplex

DEFAULT_POINTS = {1: 65, 2: 33, 3: 17}
FACET_LIMIT_K = 3   # facet enumeration is skipped above this many users


class OutsideBox(ValueError):
    """Query PSD lies outside the hull's grid box."""

    def __init__(self, msg, required):
        super().__init__(msg)
        self.required = required


@dataclass(frozen=True)
class GridConfig:
    """Per-axis breakpoints for hull construction.

    Each axis spans ``[0, kappa * p_i / min_m b_m]`` with ``points`` nodes,
    half linearly and half exponentially warped toward zero.  ``extra``
    lists additional breakpoints (one tuple per user, or one shared tuple)
    merged into every axis; ``upper`` overrides the box edge.  With
    ``flat_points`` the PSDs ``p_i / b_m`` of spreading each budget evenly
    over one sub-channel are added as well.
    """

    points: int | None = None
    kappa: float = 4.0
    warp: float = 4.0
    extra: tuple = ()
    upper: tuple | None = None
    flat_points: bool = True

    def npoints(self, K):
        return self.points if self.points is not None else DEFAULT_POINTS.get(K, 9)

    def refined(self) -> "GridConfig":
        """Grid with every spacing halved (old nodes kept)."""
        n = self.npoints_hint
        return GridConfig(2 * n - 1, self.kappa, self.warp, self.extra, self.upper,
                          self.flat_points)

    @property
    def npoints_hint(self):
        return self.points if self.points is not None else 33

    def key(self):
        return (self.points, self.kappa, self.warp, self.extra, self.upper, self.flat_points)

    def budget_dependent(self):
        return self.upper is None or self.flat_points

    def axes(self, spec: ChannelSpec):
        K = spec.K
        n = self.npoints(K)
        if n < 2:
            raise ValueError("grid needs at least 2 points per axis")
        if self.upper is not None:
            U = np.broadcast_to(np.asarray(self.upper, float), (K,))
        else:
            U = self.kappa * spec.budgets / spec.bandwidths.min()
        t = np.linspace(0.0, 1.0, n)
        shape = 0.5 * (t + np.expm1(self.warp * t) / np.expm1(self.warp)) if self.warp else t
        extra = self.extra
        if extra and not isinstance(extra[0], (tuple, list, np.ndarray)):
            extra = (tuple(extra),) * K
        out = []
        for i in range(K):
            if U[i] <= 0:
                out.append(np.zeros(1))
                continue
            ax = U[i] * shape
            e = np.asarray(extra[i] if extra else (), float)
            if self.flat_points:
                e = np.concatenate([e, spec.budgets[i] / spec.bandwidths])
            if e.size:
                ax = np.union1d(ax, e[(e >= 0) & (e <= U[i])])
            out.append(ax)
        return out


def weighted_sum_rate(spec: ChannelSpec, m: int, P):
    """``sum_i w_i r_i(P)`` on sub-channel ``m``; batched over leading axes."""
    r = rate_density(spec, m, P)
    w = spec.weights
    mask = w != 0
    out = r[..., mask] @ w[mask]
    return float(out) if np.ndim(out) == 0 else out


def _monotone_extension(values, shape):
    """Running max over dominated grid points, with the flat index attaining it."""
    v = values.reshape(shape).copy()
    wit = np.arange(v.size).reshape(shape)
    for ax in range(len(shape)):
        v = np.moveaxis(v, ax, 0)
        wit = np.moveaxis(wit, ax, 0)
        for k in range(1, v.shape[0]):
            better = v[k - 1] > v[k]   # strict: ties keep the lower-power point
            v[k] = np.where(better, v[k - 1], v[k])
            wit[k] = np.where(better, wit[k - 1], wit[k])
        v = np.moveaxis(v, 0, ax)
        wit = np.moveaxis(wit, 0, ax)
    return v.ravel(), wit.ravel()


@dataclass(frozen=True, eq=False)
class CaratheodoryDecomposition:
    weights: np.ndarray      # (k,), sum to one
    points: np.ndarray       # (k, K) hull vertex positions, sum_k w_k P_k = P
    values: np.ndarray       # (k,) envelope values at the vertices
    witnesses: np.ndarray    # (k, K) PSDs actually transmitted (<= points)
    vertex_ids: tuple        # grid flat indices of the vertices

    @property
    def value(self):
        return float(self.weights @ self.values)


@dataclass(frozen=True, eq=False)
class HullFunction:
    m: int
    axes: tuple
    weights: np.ndarray
    grid_values: np.ndarray        # raw R on the grid (flat, C order)
    ext_values: np.ndarray         # monotone-extended values
    witness: np.ndarray            # flat index of the point attaining ext_values
    vertices: np.ndarray           # flat indices of upper-envelope vertices
    slopes: np.ndarray | None      # (F, K) facet gradients
    offsets: np.ndarray | None     # (F,) facet intercepts
    simplices: np.ndarray | None   # (F, K+1) flat vertex indices per facet
    tolerance: float               # bound on (true envelope - grid envelope)
    config_key: tuple = field(default=())

    @property
    def K(self):
        return len(self.axes)

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes)

    @property
    def upper(self):
        return np.array([a[-1] for a in self.axes])

    def point(self, idx):
        sub = np.unravel_index(np.asarray(idx), self.shape)
        return np.stack([self.axes[i][sub[i]] for i in range(self.K)], axis=-1)

    @property
    def points(self):
        return self.point(np.arange(self.grid_values.size))

    def candidates(self):
        """Grid points sufficient for optimizing against the envelope.

        Witnesses of the envelope vertices when facets are available,
        otherwise every grid point.
        """
        if self.slopes is None:
            return np.arange(self.grid_values.size)
        return np.unique(self.witness[self.vertices])

    def facets_json(self):
        if self.slopes is None:
            return []
        return [{"slope": s.tolist(), "offset": float(o), "vertices": v.tolist()}
                for s, o, v in zip(self.slopes, self.offsets, self.simplices)]


def _axis_spacing(ax):
    return float(np.diff(ax).max()) if ax.size > 1 else 0.0


def build_hull(spec: ChannelSpec, m: int, grid: GridConfig | None = None) -> HullFunction:
    """Concave, nondecreasing envelope of the weighted sum-rate on sub-channel ``m``."""
    grid = grid or GridConfig()
    axes = [np.asarray(a, float) for a in grid.axes(spec)]
    K = spec.K
    if any(a.size < 2 for a, p in zip(axes, spec.budgets) if p > 0):
        raise ValueError("grid needs at least 2 points per axis")
    shape = tuple(a.size for a in axes)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, K)
    vals = weighted_rates(mesh, spec.alpha[m], spec.noise[m], spec.weights)
    ext, wit = _monotone_extension(vals, shape)
    tol = sum(spec.weights[i] / spec.noise[m, i] * _axis_spacing(axes[i]) for i in range(K))

    live = [i for i in range(K) if axes[i].size > 1]
    if K > FACET_LIMIT_K or not live:
        verts = np.arange(vals.size) if live else np.array([0])
        return HullFunction(m, tuple(axes), spec.weights, vals, ext, wit, verts,
                            None, None, None, float(tol), grid.key())

    scale = np.array([axes[i][-1] for i in live])
    X = mesh[:, live] / scale
    rmin, rmax = ext.min(), ext.max()
    rspan = max(rmax - rmin, 1.0)
    Y = (ext - rmin) / rspan
    # sink points under every box corner keep the hull full-dimensional
    corners = np.array(np.meshgrid(*[[0.0, 1.0]] * len(live), indexing="ij")).reshape(
        len(live), -1).T
    pts = np.vstack([np.column_stack([X, Y]),
                     np.column_stack([corners, np.full(len(corners), -1.0)])])
    try:
        hull = ConvexHull(pts, qhull_options="Qt")
    except QhullError as exc:  # pragma: no cover - degenerate inputs only
        raise ValueError(f"hull construction failed: {exc}") from None
    eq = hull.equations
    normal_norm = np.linalg.norm(eq[:, :-1], axis=1)
    up = eq[:, -2] > 1e-9 * normal_norm
    simp = hull.simplices[up]
    eq = eq[up]
    n_real = X.shape[0]
    keep = np.all(simp < n_real, axis=1)
    simp, eq = simp[keep], eq[keep]
    # y = -(n_x . x + off) / n_y in scaled units -> R = a + g . P
    n_x, n_y, off = eq[:, :-2], eq[:, -2], eq[:, -1]
    g_live = -(n_x / n_y[:, None]) / scale * rspan
    a = -(off / n_y) * rspan + rmin
    slopes = np.zeros((len(eq), K))
    slopes[:, live] = g_live
    # deterministic facet order: lexicographic by sorted vertex index
    simp = np.sort(simp, axis=1)
    order = np.lexsort(simp.T[::-1])
    simp, slopes, a = simp[order], slopes[order], a[order]
    verts = np.unique(simp)
    if len(live) < K:
        pad = np.full((len(simp), K + 1 - simp.shape[1]), -1)
        simp = np.hstack([simp, pad])
    return HullFunction(m, tuple(axes), spec.weights, vals, ext, wit, verts,
                        slopes, a, simp, float(tol), grid.key())


def _check_box(hull, P):
    P = np.asarray(P, dtype=float)
    U = hull.upper
    slack = 1e-12 * np.maximum(U, 1.0)
    if np.any(P < -slack) or np.any(P > U + slack):
        need = np.maximum(U, P)
        raise OutsideBox(f"PSD {P.tolist()} outside hull box {U.tolist()}; "
                         f"extend the grid to at least {need.tolist()}", need)
    return np.clip(P, 0.0, U)


def _lp_envelope(hull, P):
    """Envelope value and basic decomposition by linear programming."""
    cand = np.arange(hull.grid_values.size)
    pts = hull.point(cand)
    live = [i for i in range(hull.K) if hull.axes[i].size > 1]
    A = np.vstack([pts[:, live].T, np.ones(len(cand))])
    b = np.append(P[live], 1.0)
    res = simplex(hull.ext_values[cand], A, b)
    nz = np.nonzero(res.x > 1e-12)[0]
    return res.value, cand[nz], res.x[nz]


def evaluate(hull: HullFunction, P) -> float:
    """Envelope value at ``P`` (minimum over supporting facets)."""
    P = _check_box(hull, P)
    if hull.slopes is None:
        return _lp_envelope(hull, P)[0]
    return float(np.min(hull.offsets + hull.slopes @ P))


def evaluate_many(hull: HullFunction, P) -> np.ndarray:
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if hull.slopes is None:
        return np.array([evaluate(hull, row) for row in P])
    for row in P:
        _check_box(hull, row)
    return np.min(hull.offsets[None, :] + P @ hull.slopes.T, axis=1)


def _decomp(hull, ids, w):
    w = np.asarray(w, float)
    w = np.where(w < 0, 0.0, w)
    keep = w > 0
    ids, w = np.asarray(ids)[keep], w[keep] / w[keep].sum()
    order = sorted(range(len(ids)), key=lambda k: (-w[k], ids[k]))
    ids, w = ids[order], w[order]
    return CaratheodoryDecomposition(
        w, hull.point(ids), hull.ext_values[ids], hull.point(hull.witness[ids]),
        tuple(int(i) for i in ids))


def decompose(hull: HullFunction, P) -> CaratheodoryDecomposition:
    """At most ``K + 1`` envelope vertices whose mixture reproduces ``P``."""
    P = _check_box(hull, P)
    live = [i for i in range(hull.K) if hull.axes[i].size > 1]
    if hull.slopes is not None:
        vals = hull.offsets + hull.slopes @ P
        best = vals.min()
        scale = max(1.0, abs(best))
        for f in np.nonzero(vals <= best + 1e-10 * scale)[0]:
            ids = hull.simplices[f]
            ids = ids[ids >= 0]
            V = hull.point(ids)[:, live]
            A = np.vstack([V.T, np.ones(len(ids))])
            rhs = np.append(P[live], 1.0)
            try:
                c = np.linalg.solve(A, rhs)
            except np.linalg.LinAlgError:
                continue
            if c.min() >= -1e-9 and np.abs(A @ c - rhs).max() <= 1e-9 * max(1.0, P.max()):
                return _decomp(hull, ids, c)
    _, ids, w = _lp_envelope(hull, P)
    return _decomp(hull, ids, w)


def price_max(hull: HullFunction, lam):
    """``max_P R(P) - lam.P`` over raw grid points and over the envelope.

    Returns ``(raw_max, raw_argmax, envelope_max)``; the two maxima agree
    because a linear tilt of the envelope peaks at a vertex.
    """
    lam = np.asarray(lam, dtype=float)
    pts = hull.points
    tilt = hull.grid_values - pts @ lam
    k = int(np.argmax(tilt))
    verts = hull.vertices
    env = float(np.max(hull.ext_values[verts] - pts[verts] @ lam))
    return float(tilt[k]), k, env


# ---------------------------------------------------------------------------
# caching across budgets

class HullCache:
    """Hulls keyed by channel parameters, sub-channel and grid.

    Budgets only enter through the box edge, so callers that re-solve with
    new budgets should fix ``GridConfig.upper`` to reuse hulls.
    """

    def __init__(self):
        self._data = {}
        self._locks = {}
        self._guard = threading.Lock()

    def get(self, spec, m, grid):
        key = (spec.fingerprint(), m, grid.key(),
               spec.budgets.tobytes() if grid.budget_dependent() else None)
        with self._guard:
            lock = self._locks.setdefault(key, threading.Lock())
        with lock:
            if key not in self._data:
                self._data[key] = build_hull(spec, m, grid)
            return self._data[key]

    def __len__(self):
        return len(self._data)


def worker_count():
    env = os.environ.get("SPECTRA_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def build_hulls(spec: ChannelSpec, grid: GridConfig | None = None,
                cache: HullCache | None = None, threads: int | None = None):
    """One hull per sub-channel, built in parallel."""
    grid = grid or GridConfig()
    make = (lambda m: cache.get(spec, m, grid)) if cache is not None else (lambda m: build_hull(spec, m, grid))
    n = min(threads or worker_count(), spec.M)
    if n <= 1:
        return [make(m) for m in range(spec.M)]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(make, range(spec.M)))


def hull_section_sum(hull: HullFunction, p: float) -> float:
    """Symmetric two-user section: envelope at ``(p/2, p/2)``."""
    return evaluate(hull, np.array([p / 2, p / 2]))


def grid_lipschitz_tolerance(spec, m, axes):
    return float(sum(spec.weights[i] / spec.noise[m, i] * _axis_spacing(np.asarray(axes[i]))
                     for i in range(spec.K)))


__all__ = [
    "GridConfig", "HullFunction", "CaratheodoryDecomposition", "HullCache", "OutsideBox",
    "weighted_sum_rate", "build_hull", "build_hulls", "evaluate", "evaluate_many",
    "decompose", "price_max", "hull_section_sum", "grid_lipschitz_tolerance",
]
