"""Closed-form sum-rate optimum for two-user symmetric channels.

Powers here are normalized by the (common) noise PSD.  ``f_star`` is the best
flat-sharing sum-rate, ``h_star`` the best FDMA sum-rate, and ``r_star`` the
concave envelope of their upper envelope, achieved by mixing one sharing
sub-band with one FDMA sub-band.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .channel import ChannelSpec, Piece, SpectrumAllocation, total_rates
from .fdma import fdma_power_region_threshold

SCAN_PANELS = 1024
RESIDUAL_TOL = 1e-10
SLOPE_RTOL = 1e-8


class TangencyError(RuntimeError):
    """No valid common tangent found; carries the residuals seen."""

    def __init__(self, msg, endpoints=None):
        super().__init__(msg)
        self.endpoints = endpoints


class OutOfRangeWarning(UserWarning):
    pass


def _check_alpha(alpha):
    if not 0.0 < alpha < 0.5:
        raise ValueError(f"symmetric closed form needs 0 < alpha < 1/2, got {alpha!r}")


def f_star(alpha: float, p):
    """Best flat-sharing sum-rate ``2 ln(1 + (p/2) / (1 + alpha p/2))``.

    Only valid as the sharing optimum for ``p <= p_0``; larger ``p`` is
    evaluated but warned about.
    """
    _check_alpha(alpha)
    p = np.asarray(p, dtype=float)
    if np.any(p > fdma_power_region_threshold(alpha) * (1 + 1e-12)):
        warnings.warn("f_star evaluated above the crossover power p_0", OutOfRangeWarning,
                      stacklevel=2)
    u = 0.5 * p
    out = 2.0 * np.log1p(u / (1.0 + alpha * u))
    return float(out) if out.ndim == 0 else out


def _f_star(alpha, p):
    u = 0.5 * p
    return 2.0 * np.log1p(u / (1.0 + alpha * u))


def f_star_slope(alpha, p):
    u = 0.5 * np.asarray(p, dtype=float)
    return 1.0 / ((1.0 + (1.0 + alpha) * u) * (1.0 + alpha * u))


def h_star(p):
    """Best FDMA sum-rate ``ln(1 + p)``."""
    out = np.log1p(np.asarray(p, dtype=float))
    return float(out) if out.ndim == 0 else out


def h_star_slope(p):
    return 1.0 / (1.0 + np.asarray(p, dtype=float))


def tangency_residual(alpha, p):
    """Difference of the two sides of the tangency equation for ``p_f``."""
    p = np.asarray(p, dtype=float)
    lhs = p * (alpha * (1 + alpha) * p + 4 * alpha - 2) / (
        (alpha * p + 2) * ((1 + alpha) * p + 2))
    # ln((a p + 2)^3 / (4((1+a)p + 2))) written with log1p to stay accurate near 0
    rhs = 3.0 * np.log1p(0.5 * alpha * p) - np.log1p(0.5 * (1 + alpha) * p)
    return lhs - rhs


def p_h_from_p_f(alpha, p_f):
    return 0.25 * p_f * (alpha * (1 + alpha) * p_f + 4 * alpha + 2)


@dataclass(frozen=True)
class TangencySolution:
    alpha: float
    p_f: float
    p_h: float
    p_0: float
    slope: float
    residual: float
    roots: tuple = field(default=())

    def to_json(self):
        return {"alpha": self.alpha, "p_f": self.p_f, "p_h": self.p_h, "p_0": self.p_0,
                "slope": self.slope, "residual": self.residual,
                "roots": list(self.roots)}


def _validate(alpha, p_f, p_0):
    p_h = p_h_from_p_f(alpha, p_f)
    s_f = f_star_slope(alpha, p_f)
    s_h = h_star_slope(p_h)
    chord = (math.log1p(p_h) - _f_star(alpha, p_f)) / (p_h - p_f) if p_h > p_f else math.nan
    ok = (0 < p_f < p_0 < p_h
          and abs(s_f - s_h) <= SLOPE_RTOL * s_h
          and abs(chord - s_h) <= SLOPE_RTOL * s_h)
    return ok, p_h, s_f


@lru_cache(maxsize=4096)
def solve_tangency(alpha: float) -> TangencySolution:
    """Common tangent of ``f_star`` and ``h_star`` for ``0 < alpha < 1/2``.

    Scans ``[eps, p_0 - eps]`` in 1024 panels for sign changes of the
    tangency residual, polishes each with Brent's method and keeps the root
    that passes the slope check with ``p_f < p_0 < p_h``.
    """
    alpha = float(alpha)
    _check_alpha(alpha)
    p_0 = fdma_power_region_threshold(alpha)
    eps = 1e-9 * p_0
    lo, hi = eps, p_0 - eps
    roots = []
    for _ in range(8):
        grid = np.linspace(lo, hi, SCAN_PANELS + 1)
        vals = tangency_residual(alpha, grid)
        idx = np.nonzero(np.signbit(vals[:-1]) != np.signbit(vals[1:]))[0]
        for k in idx:
            r = brentq(lambda x: float(tangency_residual(alpha, x)), grid[k], grid[k + 1],
                       xtol=1e-14 * max(1.0, p_0), rtol=4 * np.finfo(float).eps, maxiter=200)
            roots.append(r)
        if any(_validate(alpha, r, p_0)[0] for r in roots):
            break
        lo, hi = hi, 2 * hi  # expand upward if nothing valid below p_0
    valid = [r for r in roots if _validate(alpha, r, p_0)[0]]
    if not valid:
        raise TangencyError(
            f"no valid tangency root for alpha={alpha}",
            endpoints=(float(tangency_residual(alpha, eps)),
                       float(tangency_residual(alpha, p_0 - eps))))
    p_f = valid[0]
    _, p_h, slope = _validate(alpha, p_f, p_0)
    res = float(tangency_residual(alpha, p_f))
    if abs(res) >= RESIDUAL_TOL:
        raise TangencyError(f"tangency residual {res!r} too large", endpoints=(res, res))
    return TangencySolution(alpha, float(p_f), float(p_h), float(p_0), float(slope), res,
                            tuple(float(r) for r in roots))


@dataclass(frozen=True)
class EnvelopeValue:
    value: float
    regime: str          # "sharing" | "mixture" | "fdma"
    mix: float           # bandwidth fraction given to FDMA


def r_star_flat(alpha: float, p: float) -> EnvelopeValue:
    """Optimal sum-rate in a flat symmetric channel with sum power ``p``."""
    if p < 0:
        raise ValueError("power must be non-negative")
    if alpha >= 0.5:
        return EnvelopeValue(math.log1p(p), "fdma", 1.0)
    if alpha <= 0:
        # uncoupled users: equal split on the whole band
        return EnvelopeValue(2 * math.log1p(p / 2), "sharing", 0.0)
    t = solve_tangency(alpha)
    if p <= t.p_f:
        return EnvelopeValue(float(_f_star(alpha, p)), "sharing", 0.0)
    if p >= t.p_h:
        return EnvelopeValue(math.log1p(p), "fdma", 1.0)
    lam = (p - t.p_f) / (t.p_h - t.p_f)
    f_f = float(_f_star(alpha, t.p_f))
    return EnvelopeValue(f_f + lam * (math.log1p(t.p_h) - f_f), "mixture", lam)


def r_star_curve(alpha, p):
    """Vectorized envelope value."""
    return np.array([r_star_flat(alpha, float(x)).value for x in np.ravel(p)]).reshape(
        np.shape(p))


def _flat_pieces(alpha, p, start, width, scale):
    """Pieces realizing the envelope at ``p`` inside ``[start, start+width]``."""
    env = r_star_flat(alpha, p)
    end = start + width
    if env.regime == "sharing":
        return [Piece(start, end, (scale * p / 2, scale * p / 2))]
    if env.regime == "fdma":
        mid = start + width / 2
        return [Piece(start, mid, (scale * p, 0.0)), Piece(mid, end, (0.0, scale * p))]
    t = solve_tangency(alpha)
    lam = env.mix
    a = start + (1 - lam) * width
    b = a + lam * width / 2
    return [Piece(start, a, (scale * t.p_f / 2, scale * t.p_f / 2)),
            Piece(a, b, (scale * t.p_h, 0.0)),
            Piece(b, end, (0.0, scale * t.p_h))]


def build_allocation_flat(alpha: float, p: float) -> SpectrumAllocation:
    """Allocation achieving ``r_star_flat(alpha, p)`` on the unit band.

    Each user spends exactly ``p/2``.
    """
    return SpectrumAllocation(tuple(pc for pc in _flat_pieces(alpha, p, 0.0, 1.0, 1.0)
                                    if pc.end > pc.start))


# ---------------------------------------------------------------------------
# frequency-selective symmetric channels

@dataclass(frozen=True)
class SymmetricResult:
    value: float
    allocation: SpectrumAllocation
    sum_psd: np.ndarray          # per sub-channel normalized sum PSD q_m
    regimes: tuple
    price: float
    rates: np.ndarray
    powers: np.ndarray
    metadata: dict

    @property
    def prices(self):
        return np.array([self.price, self.price])

    def to_json(self):
        return {
            "value": self.value,
            "sum_psd": self.sum_psd.tolist(),
            "regimes": list(self.regimes),
            "price": self.price,
            "prices": self.prices.tolist(),
            "rates": self.rates.tolist(),
            "powers": self.powers.tolist(),
            "allocation": self.allocation.to_json(),
            "metadata": self.metadata,
        }


def _is_symmetric(spec):
    return (spec.K == 2
            and np.allclose(spec.alpha[:, 0, 1], spec.alpha[:, 1, 0], rtol=1e-12, atol=0)
            and np.allclose(spec.noise[:, 0], spec.noise[:, 1], rtol=1e-12, atol=0))


class _Sub:
    """Envelope slope data of one sub-channel in normalized power units."""

    def __init__(self, alpha):
        self.alpha = alpha
        self.fdma_only = alpha >= 0.5 or alpha <= 0
        if alpha <= 0:
            self.t = None
        elif not self.fdma_only:
            self.t = solve_tangency(alpha)
        else:
            self.t = None

    def demand(self, slope):
        """Normalized sum-PSD where the envelope slope equals ``slope``.

        Returns ``(low, high)``: equal except at the slope of the linear
        mixture segment, where any value in ``[p_f, p_h]`` is optimal.
        """
        if slope >= 1.0:
            return 0.0, 0.0
        if self.alpha <= 0:
            q = 2.0 * (1.0 / slope - 1.0)   # two parallel single-user channels
            return q, q
        if self.fdma_only:
            q = 1.0 / slope - 1.0
            return q, q
        t = self.t
        if slope > t.slope:
            a = self.alpha
            root = math.sqrt(1.0 + 4.0 * a * (1.0 + a) / slope)
            q = 4.0 * (1.0 / slope - 1.0) / (root + 1.0 + 2.0 * a)
            return min(q, t.p_f), min(q, t.p_f)
        if slope < t.slope:
            q = 1.0 / slope - 1.0
            return max(q, t.p_h), max(q, t.p_h)
        return t.p_f, t.p_h

    def value(self, q):
        if self.alpha <= 0:
            return 2 * math.log1p(q / 2)
        return r_star_flat(self.alpha, q).value


def solve_symmetric_selective(spec: ChannelSpec, sum_budget: float | None = None,
                              rtol: float = 1e-12) -> SymmetricResult:
    """Maximize ``sum_m b_m r*_m(q_m)`` s.t. ``sum_m b_m n_m q_m <= p``.

    Solved through the sum-power price: every sub-channel's concave envelope
    is maximized against the price, and the price is bisected until the
    budget binds.  At a price equal to the slope of a mixture segment the
    demand is set-valued; the budget is then met exactly by choosing the
    mixture point.
    """
    if not _is_symmetric(spec):
        raise ValueError("spec must be two-user symmetric on every sub-channel")
    p = float(spec.budgets.sum() if sum_budget is None else sum_budget)
    if p < 0:
        raise ValueError("sum budget must be non-negative")
    alphas = spec.alpha[:, 0, 1]
    n = spec.noise[:, 0]
    b = spec.bandwidths
    subs = [_Sub(float(a)) for a in alphas]
    cost = b * n   # power per unit of normalized sum-PSD

    def demands(mu):
        lo = np.empty(spec.M)
        hi = np.empty(spec.M)
        for m, s in enumerate(subs):
            lo[m], hi[m] = s.demand(mu * n[m])
        return lo, hi

    q = np.zeros(spec.M)
    mu = 1.0 / n.min()
    if p > 0:
        critical = sorted({s.t.slope / n[m] for m, s in enumerate(subs) if s.t is not None},
                          reverse=True)
        done = False
        for c in critical:
            lo, hi = demands(c)
            if cost @ lo <= p <= cost @ hi:
                mu = c
                # one common mixture fraction across all set-valued sub-channels
                span = cost @ (hi - lo)
                theta = 0.0 if span <= 0 else min(1.0, (p - cost @ lo) / span)
                q = lo + theta * (hi - lo)
                done = True
                break
        if not done:
            def excess(x):
                lo, hi = demands(x)
                return cost @ lo - p
            top = 1.0 / n.min()
            bot = top
            while excess(bot) < 0:
                bot *= 0.5
            mu = brentq(excess, bot, top, xtol=1e-300, rtol=rtol, maxiter=500)
            q = demands(mu)[0]
            used = cost @ q
            if used > 0:
                q = q * min(1.0, p / used)
    values = np.array([s.value(float(x)) for s, x in zip(subs, q)])
    total = float(b @ values)

    pieces = []
    edges = spec.edges
    regimes = []
    for m, s in enumerate(subs):
        regimes.append(r_star_flat(s.alpha, float(q[m])).regime)
        pieces.extend(_flat_pieces(s.alpha, float(q[m]), edges[m],
                                   edges[m + 1] - edges[m], n[m]))
    pieces[-1] = Piece(pieces[-1].start, 1.0, pieces[-1].psd)
    alloc = SpectrumAllocation(tuple(p_ for p_ in pieces if p_.end > p_.start))
    rates = total_rates(spec, alloc)
    meta = {"fdma_only_subchannels": [m for m, s in enumerate(subs) if s.fdma_only and s.alpha > 0],
            "individual_budget": p / 2,
            "sum_budget": p}
    return SymmetricResult(total, alloc, q, tuple(regimes), float(mu), rates,
                           alloc.powers(), meta)
