"""Independent verifiers: quantized exhaustive search, dual sweeps, property suites.

``exhaustive_best`` searches every allocation in which each flat sub-channel
is cut into ``S`` equal sub-bands and every user spends an integer number of
power quanta ``p_i / (levels - 1)`` in each sub-band.  The search is exact
over that finite set: a max-plus dynamic program over the vector of quanta
used so far replaces the literal product enumeration, which
``brute_force_best`` still provides for tiny instances as a cross-check.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from . import fdma
from .channel import ChannelSpec, Piece, SpectrumAllocation, rate_density_raw
from .kernels import maxplus_step, weighted_rates
from .optimizer import dual_value

DEFAULT_CAP = 10**8
DEFAULT_LEVELS = {2: 25, 3: 9}


class SearchTooLarge(ValueError):
    def __init__(self, size, cap):
        super().__init__(f"oracle search size {size:.3g} exceeds cap {cap:.3g}")
        self.size = size
        self.cap = cap


@dataclass(frozen=True)
class OracleConfig:
    levels: int | None = None   # power levels per user per sub-band, including zero
    splits: int = 2             # equal sub-bands per flat sub-channel
    cap: float = DEFAULT_CAP

    def __post_init__(self):
        if self.levels is not None and self.levels < 2:
            raise ValueError("levels must be >= 2")
        if self.splits < 1:
            raise ValueError("splits must be >= 1")

    def resolved_levels(self, K):
        if self.levels is not None:
            return self.levels
        return DEFAULT_LEVELS.get(K, 5)


@dataclass(frozen=True, eq=False)
class OracleResult:
    value: float
    allocation: SpectrumAllocation
    tolerance: float
    quanta: np.ndarray          # (M, S, K) integer quanta per sub-band
    search_size: int

    def to_json(self):
        return {"value": self.value, "tolerance": self.tolerance,
                "search_size": self.search_size,
                "allocation": self.allocation.to_json()}


def search_size(spec: ChannelSpec, config: OracleConfig) -> int:
    """Number of (state, move) pairs the dynamic program evaluates."""
    L = config.resolved_levels(spec.K)
    return spec.M * config.splits * (L * (L + 1) // 2) ** spec.K


def quantization_tolerance(spec: ChannelSpec, config: OracleConfig) -> float:
    """Lipschitz-times-spacing bound for the quantized search.

    Rounding one user's power down by a quantum ``delta_i`` inside a
    sub-band of width ``w`` lowers its PSD by ``delta_i / w``; its own rate
    drops by at most ``w_i (delta_i / w) / n_i`` times ``w`` while every other
    rate can only rise.  Summing over all sub-bands gives the bound.
    """
    L = config.resolved_levels(spec.K)
    delta = spec.budgets / (L - 1)
    per_sub = (spec.weights * delta / spec.noise).sum(axis=1)
    return float(config.splits * per_sub.sum())


def _psd_table(spec, m, width, L):
    """Grid of quanta vectors for sub-band ``m`` and their PSDs (C order)."""
    K = spec.K
    q = np.stack(np.meshgrid(*[np.arange(L)] * K, indexing="ij"), axis=-1).reshape(-1, K)
    delta = spec.budgets / (L - 1)
    return q, q * delta / width


def exhaustive_best(spec: ChannelSpec, config: OracleConfig | None = None) -> OracleResult:
    """Best weighted sum-rate over the quantized allocation set."""
    config = config or OracleConfig()
    size = search_size(spec, config)
    if size > config.cap:
        raise SearchTooLarge(size, config.cap)
    K, M, S = spec.K, spec.M, config.splits
    L = config.resolved_levels(K)
    shape = (L,) * K
    n_states = L ** K
    V = np.full(n_states, -np.inf)
    V[0] = 0.0
    back = []
    for m in range(M):
        width = spec.bandwidths[m] / S
        _, psd = _psd_table(spec, m, width, L)
        G = width * weighted_rates(psd, spec.alpha[m], spec.noise[m], spec.weights)
        for _ in range(S):
            V, arg = maxplus_step(V, G, shape)
            back.append((m, arg))
    s = int(np.argmax(V))   # lowest flat state on ties
    value = float(V[s])

    # walk the back-pointers to recover each sub-band's quanta
    quanta = np.zeros((M, S, K), dtype=int)
    step = len(back)
    for m in reversed(range(M)):
        for k in reversed(range(S)):
            step -= 1
            _, arg = back[step]
            qi = int(arg[s])
            qv = np.array(np.unravel_index(qi, shape))
            quanta[m, k] = qv
            s -= qi
    return OracleResult(value, _allocation(spec, quanta, L), quantization_tolerance(spec, config),
                        quanta, size)


def _allocation(spec, quanta, L):
    M, S, K = quanta.shape
    delta = spec.budgets / (L - 1)
    edges = spec.edges
    pieces = []
    for m in range(M):
        w = spec.bandwidths[m] / S
        for k in range(S):
            start = edges[m] + k * w
            end = edges[m + 1] if k == S - 1 else edges[m] + (k + 1) * w
            pieces.append(Piece(float(start), float(end),
                                tuple(float(x) for x in quanta[m, k] * delta / w)))
    return SpectrumAllocation(tuple(pieces))


def brute_force_best(spec: ChannelSpec, config: OracleConfig) -> OracleResult:
    """Literal enumeration of every quanta assignment with a feasibility filter.

    Exponential in the number of sub-bands; intended for tiny instances.
    Ties keep the lexicographically first assignment.
    """
    K, M, S = spec.K, spec.M, config.splits
    L = config.resolved_levels(K)
    nb = M * S
    size = (L ** K) ** nb
    if size > config.cap:
        raise SearchTooLarge(size, config.cap)
    delta = spec.budgets / (L - 1)
    levels = list(itertools.product(range(L), repeat=K))
    best, best_q = -math.inf, None
    for combo in itertools.product(levels, repeat=nb):
        q = np.array(combo).reshape(M, S, K)
        if np.any(q.sum(axis=(0, 1)) > L - 1):
            continue
        total = 0.0
        for m in range(M):
            w = spec.bandwidths[m] / S
            P = q[m] * delta / w
            r = rate_density_raw(spec.alpha[m], spec.noise[m], P)
            mask = spec.weights != 0
            total += w * float((r[..., mask] @ spec.weights[mask]).sum())
        if total > best:
            best, best_q = total, q
    return OracleResult(best, _allocation(spec, best_q, L),
                        quantization_tolerance(spec, config), best_q, size)


# ---------------------------------------------------------------------------
# duality gap

def duality_gap(spec: ChannelSpec, hulls, value: float, prices, rounds: int = 2,
                span: float | None = None) -> dict:
    """Minimum of ``g(lam) - value`` found by coordinate-wise line searches.

    Starts at ``prices`` (typically the LP duals) and searches each
    coordinate on ``[max(0, lam_i - span), lam_i + span]``.  Every evaluated
    point is also a weak-duality check.
    """
    lam = np.maximum(np.asarray(prices, dtype=float), 0.0)
    g0, _ = dual_value(spec, hulls, lam)
    best = g0
    worst_weak = g0 - value
    evaluations = 1
    for _ in range(rounds):
        for i in range(spec.K):
            width = span if span is not None else max(1.0, 2.0 * lam[i])
            lo, hi = max(0.0, lam[i] - width), lam[i] + width

            def g_i(x, i=i):
                nonlocal worst_weak, evaluations
                trial = lam.copy()
                trial[i] = x
                g, _ = dual_value(spec, hulls, trial)
                worst_weak = min(worst_weak, g - value)
                evaluations += 1
                return g

            res = minimize_scalar(g_i, bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-10})
            if res.fun < best:
                best = float(res.fun)
                lam[i] = res.x
    return {"gap": float(best - value), "g_at_prices": float(g0 - value),
            "weak_duality_min": float(worst_weak), "prices": lam.tolist(),
            "evaluations": evaluations}


# ---------------------------------------------------------------------------
# property suites

DEFAULT_COUNTS = {"strong_fdma": 10_000, "outsider_gain": 10_000, "log_ratio_points": 1000,
                  "crossover": 50, "boundary": 200}


def _record(report, name, checked, failures):
    report[name] = {"checked": int(checked), "passed": int(checked - len(failures)),
                    "counterexample": failures[0] if failures else None}


def _loguniform(rng, lo, hi, size=None):
    return np.exp(rng.uniform(np.log(lo), np.log(hi), size))


def _random_strong_alpha(rng, K):
    a = 0.5 + rng.exponential(1.0, (K, K))
    a[rng.random((K, K)) < 0.2] = 0.5    # exercise the closed boundary
    np.fill_diagonal(a, 0.0)
    return a


def _random_psd(rng, K):
    P = _loguniform(rng, 1e-3, 1e3, K)
    P[rng.random(K) < 0.1] = 0.0
    if not P.any():
        P[rng.integers(K)] = 1.0
    return P


def check_strong_fdma(rng, n):
    """All cross gains >= 1/2: reallocating every user never lowers a rate."""
    failures = []
    for t in range(n):
        K = int(rng.integers(2, 5))
        a = _random_strong_alpha(rng, K)
        noise = _loguniform(rng, 0.1, 10.0, K)
        P = _random_psd(rng, K)
        res = fdma.reallocation_gain(a, noise, P, range(K))
        slack = 1e-12 * np.maximum(1.0, np.abs(res.rates_before))
        power = res.allocation.powers()
        if np.any(res.rates_after < res.rates_before - slack) or \
                np.any(np.abs(power - P) > 1e-12 * np.maximum(1.0, P)):
            failures.append({"index": t, "alpha": a.tolist(), "noise": noise.tolist(),
                             "P": P.tolist(), "before": res.rates_before.tolist(),
                             "after": res.rates_after.tolist()})
    return failures


def check_outsider_gain(rng, n):
    """Any gains: an outsider never loses when two interferers go FDMA."""
    failures = []
    for t in range(n):
        a = rng.exponential(1.0, (3, 3)) * (rng.random((3, 3)) < 0.9)
        np.fill_diagonal(a, 0.0)
        noise = _loguniform(rng, 0.1, 10.0, 3)
        P = _loguniform(rng, 1e-3, 1e3, 3)
        res = fdma.reallocation_gain(a, noise, P, (1, 2))
        before, after = res.rates_before[0], res.rates_after[0]
        if after < before - 1e-12 * max(1.0, abs(before)):
            failures.append({"index": t, "alpha": a.tolist(), "noise": noise.tolist(),
                             "P": P.tolist(), "before": float(before), "after": float(after)})
    return failures


def check_log_ratio_peak(n_points, cs=(1.001, 2.0, 10.0, 1000.0)):
    """``f(x) = ln((c + x) / (c - x)) / x`` peaks at ``x = 1`` on ``(0, 1]``."""
    failures = []
    x = np.linspace(1.0 / n_points, 1.0, n_points)
    for c in cs:
        f = np.log((c + x) / (c - x)) / x
        f1 = math.log((c + 1) / (c - 1))
        bad = np.nonzero(f > f1 * (1 + 1e-12))[0]
        if bad.size:
            failures.append({"c": c, "x": float(x[bad[0]]), "f": float(f[bad[0]]), "f1": f1})
    return failures, len(cs) * n_points


def _pair_sums(alpha, p1, p2):
    a = np.array([[0.0, alpha], [alpha, 0.0]])
    P = np.array([p1, p2])
    share = fdma.sharing_rates(a, 1.0, P).sum()
    realloc = fdma.reallocated_rates(a, 1.0, P, (0, 1))[0].sum()
    return share, realloc


def check_crossover(rng, n):
    """Equal sum-rates at the crossover and a sign change across it."""
    failures = []
    for t in range(n):
        alpha = float(rng.uniform(0.01, 0.49))
        p0 = fdma.fdma_power_region_threshold(alpha)
        share, realloc = _pair_sums(alpha, p0 / 2, p0 / 2)
        lo_s, lo_r = _pair_sums(alpha, 0.45 * p0, 0.45 * p0)
        hi_s, hi_r = _pair_sums(alpha, 0.55 * p0, 0.55 * p0)
        # asymmetric budgets: the sign of the closed-form margin decides the winner
        p1, p2 = _loguniform(rng, 1e-2, 10 * p0, 2)
        s, r = _pair_sums(alpha, p1, p2)
        margin = fdma.pair_sharing_margin(alpha, p1, p2)
        scale = 1e-9 * max(1.0, abs(s))
        ok = (abs(share - realloc) <= 1e-9 and lo_s > lo_r and hi_r > hi_s
              and (abs(r - s) <= scale or np.sign(r - s) == np.sign(margin)))
        if not ok:
            failures.append({"index": t, "alpha": alpha, "p0": p0,
                             "at_p0": [float(share), float(realloc)],
                             "below": [float(lo_s), float(lo_r)],
                             "above": [float(hi_s), float(hi_r)],
                             "asymmetric": [float(p1), float(p2), float(s), float(r),
                                            float(margin)]})
    return failures


def check_boundary(rng, n):
    """Gains exactly 1/2 and PSDs on the axes: weak inequalities stay intact."""
    failures = []
    a = np.array([[0.0, 0.5], [0.5, 0.0]])
    for t in range(n):
        p = float(_loguniform(rng, 1e-3, 1e3))
        P = np.array([p, 0.0]) if t % 2 == 0 else np.array([0.0, p])
        res = fdma.reallocation_gain(a, 1.0, P, (0, 1))
        if np.any(np.abs(res.rates_after - res.rates_before) > 1e-12 * max(1.0, p)):
            failures.append({"index": t, "P": P.tolist(), "before": res.rates_before.tolist(),
                             "after": res.rates_after.tolist()})
        P = np.array([p, float(_loguniform(rng, 1e-3, 1e3))])
        res = fdma.reallocation_gain(a, 1.0, P, (0, 1))
        if np.any(res.rates_after < res.rates_before - 1e-12 * np.maximum(1.0, res.rates_before)):
            failures.append({"index": t, "P": P.tolist(), "before": res.rates_before.tolist(),
                             "after": res.rates_after.tolist()})
    return failures


def property_suite(seed: int = 0, counts: dict | None = None) -> dict:
    """Run every randomized property check from one seed.

    Each property gets its own child generator, so changing one count does
    not perturb the instances drawn for the others.
    """
    counts = {**DEFAULT_COUNTS, **(counts or {})}
    seeds = np.random.SeedSequence(seed).spawn(4)
    rngs = [np.random.default_rng(s) for s in seeds]
    report = {}
    _record(report, "strong_fdma", counts["strong_fdma"], check_strong_fdma(rngs[0], counts["strong_fdma"]))
    _record(report, "outsider_gain", counts["outsider_gain"], check_outsider_gain(rngs[1], counts["outsider_gain"]))
    fails, n = check_log_ratio_peak(counts["log_ratio_points"])
    _record(report, "log_ratio_peak", n, fails)
    _record(report, "crossover", counts["crossover"], check_crossover(rngs[2], counts["crossover"]))
    _record(report, "boundary", counts["boundary"], check_boundary(rngs[3], counts["boundary"]))
    return {"seed": seed, "properties": report,
            "passed": all(v["counterexample"] is None for v in report.values())}


__all__ = ["OracleConfig", "OracleResult", "SearchTooLarge", "exhaustive_best",
           "brute_force_best", "search_size", "quantization_tolerance", "duality_gap",
           "property_suite"]
