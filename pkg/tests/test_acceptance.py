"""Acceptance criteria, one test each, at the stated tolerances."""
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from spectra.channel import Piece, SpectrumAllocation, load_spec, symmetric_two_user, weighted_rate
from spectra.envelope import GridConfig, build_hull, build_hulls, hull_section_sum
from spectra.fdma import fdma_power_region_threshold
from spectra.optimizer import solve
from spectra.oracle import (OracleConfig, check_crossover, check_outsider_gain,
                            check_strong_fdma, duality_gap, exhaustive_best)
from spectra.symmetric import (f_star, f_star_slope, h_star, h_star_slope, r_star_flat,
                               solve_symmetric_selective, solve_tangency)

from conftest import random_spec

ROOT = Path(__file__).resolve().parent.parent


def test_01_tangency(report):
    solve_tangency.cache_clear()
    t0 = time.perf_counter()
    t = solve_tangency(0.1)
    elapsed = time.perf_counter() - t0
    ok = abs(t.p_f - 54.931) <= 1e-3 and abs(t.p_h - 115.938) <= 1e-3 and elapsed < 0.010
    report(1, "tangency", ok, f"p_f={t.p_f:.6f} p_h={t.p_h:.6f} t={elapsed * 1e3:.2f}ms")
    assert ok


def test_02_crossover_identity(report):
    rng = np.random.default_rng(2)
    worst = 0.0
    for alpha in rng.uniform(1e-3, 0.5 - 1e-3, 20):
        p0 = 2 * (1 / (2 * alpha**2) - 1 / alpha)
        assert p0 == fdma_power_region_threshold(alpha)
        f, h = float(f_star(alpha, p0)), float(h_star(p0))
        worst = max(worst, abs(f - h) / abs(h))
    ok = worst < 1e-12
    report(2, "crossover identity", ok, f"max rel err={worst:.2e}")
    assert ok


def test_03_slope_inequality(report):
    rng = np.random.default_rng(3)
    ok = True
    worst = 0.0
    for alpha in rng.uniform(1e-3, 0.5 - 1e-3, 100):
        p0 = fdma_power_region_threshold(alpha)
        fs, hs = float(f_star_slope(alpha, p0)), float(h_star_slope(p0))
        worst = max(worst, abs(fs - 4 * alpha**3 / (1 - alpha)) / fs,
                    abs(hs - alpha**2 / (1 - alpha) ** 2) / hs)
        ok &= fs < hs
    ok &= worst < 1e-9
    report(3, "slope inequality at p_0", ok, f"closed-form rel err={worst:.2e}")
    assert ok


def test_04_strong_interference_fdma(report):
    t0 = time.perf_counter()
    fails = check_strong_fdma(np.random.default_rng(4), 10_000)
    elapsed = time.perf_counter() - t0
    ok = not fails and elapsed < 30
    report(4, "strong-interference FDMA", ok, f"10000 instances, {len(fails)} bad, {elapsed:.1f}s")
    assert ok, fails[:1]


def test_05_outsider_gain(report):
    fails = check_outsider_gain(np.random.default_rng(5), 10_000)
    report(5, "outsider gain", not fails, f"10000 instances, {len(fails)} bad")
    assert not fails, fails[:1]


def test_06_pair_boundary(report):
    fails = check_crossover(np.random.default_rng(6), 50)
    report(6, "two-user boundary", not fails, f"50 alphas, {len(fails)} bad")
    assert not fails, fails[:1]


def test_07_oracle_equivalence(report):
    t0 = time.perf_counter()
    cfg = OracleConfig(levels=50, splits=3)
    worst, ok = 0.0, True
    for alpha in (0.05, 0.1, 0.3):
        t = solve_tangency(alpha)
        for p in (0.5 * t.p_f, t.p_0, 0.5 * (t.p_f + t.p_h), 2 * t.p_h):
            spec = symmetric_two_user([alpha], sum_power=p)
            orc = exhaustive_best(spec, cfg)
            target = r_star_flat(alpha, p).value
            ok &= orc.value <= target + 1e-12 and target - orc.value <= orc.tolerance
            worst = max(worst, (target - orc.value) / orc.tolerance)
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 300
    report(7, "oracle vs envelope", ok, f"worst gap/tol={worst:.3f}, {elapsed:.1f}s")
    assert ok


def _random_feasible(rng, spec, cuts_per_sub=2):
    """Random piecewise-flat allocation that spends at most the budgets."""
    n = spec.M * cuts_per_sub
    share = rng.dirichlet(np.ones(n), spec.K).T * rng.uniform(0.3, 1.0, spec.K)
    edges = spec.edges
    pieces = []
    for m in range(spec.M):
        inner = np.sort(rng.uniform(edges[m], edges[m + 1], cuts_per_sub - 1))
        cuts = np.concatenate([[edges[m]], inner, [edges[m + 1]]])
        for k in range(cuts_per_sub):
            w = cuts[k + 1] - cuts[k]
            if w > 0:
                psd = share[m * cuts_per_sub + k] * spec.budgets / w
                pieces.append(Piece(float(cuts[k]), float(cuts[k + 1]),
                                    tuple(float(x) for x in psd)))
    return SpectrumAllocation(tuple(pieces))


def test_08_selective_symmetric(report):
    spec = load_spec(ROOT / "specs" / "two_user_sym.json")
    sym = solve_symmetric_selective(spec)
    orc = exhaustive_best(spec, OracleConfig(levels=50, splits=3))
    res = solve(spec)
    combined = orc.tolerance + res.diagnostics["grid_tolerance"]
    ok = abs(sym.value - orc.value) <= combined and orc.value <= sym.value + 1e-9
    ok &= res.value <= sym.value + 1e-9
    rng = np.random.default_rng(8)
    best_random = max(weighted_rate(spec, _random_feasible(rng, spec)) for _ in range(500))
    ok &= best_random <= sym.value + 1e-9
    report(8, "selective symmetric vs oracle", ok,
           f"sym={sym.value:.6f} oracle={orc.value:.6f} lp={res.value:.6f} tol={combined:.3f}")
    assert ok


def test_09_sparsity(report):
    rng = np.random.default_rng(9)
    ok, worst = True, 0.0
    for _ in range(100):
        K = int(rng.integers(2, 4))
        spec = random_spec(rng, K, int(rng.integers(1, 4)), alpha_scale=2.0)
        res = solve(spec)
        ok &= all(len(d.weights) <= K + 1 for d in res.decompositions)
        edges = spec.edges
        for m in range(spec.M):
            inside = [p for p in res.allocation.pieces
                      if p.start >= edges[m] - 1e-12 and p.end <= edges[m + 1] + 1e-12]
            ok &= len(inside) <= K + 1
        err = abs(weighted_rate(spec, res.allocation) - res.diagnostics["lp_value"])
        worst = max(worst, err)
    ok &= worst <= 1e-9
    report(9, "sparsity", ok, f"100 instances, max objective mismatch={worst:.1e}")
    assert ok


def test_10_duality_gap(report):
    rng = np.random.default_rng(10)
    t0 = time.perf_counter()
    ok, worst, weak = True, -math.inf, math.inf
    for n in range(20):
        spec = random_spec(rng, 2, 1 if n % 2 == 0 else 4)
        hulls = build_hulls(spec)
        res = solve(spec, hulls=hulls)
        out = duality_gap(spec, hulls, res.value, res.prices)
        ok &= out["gap"] <= 1e-6 * (1 + res.value) and out["gap"] >= -1e-9
        ok &= out["weak_duality_min"] >= -1e-9
        worst, weak = max(worst, out["gap"]), min(weak, out["weak_duality_min"])
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 120
    report(10, "duality gap", ok, f"max gap={worst:.1e} min weak={weak:.1e} {elapsed:.1f}s")
    assert ok


def test_11_section_consistency(report):
    alpha = 0.1
    t = solve_tangency(alpha)
    spec = symmetric_two_user([alpha], sum_power=2 * t.p_h)
    ps = np.linspace(1.0, 2 * t.p_h, 60)
    target = np.array([r_star_flat(alpha, p).value for p in ps])
    rows = []
    for grid in (GridConfig(points=33), GridConfig(points=33).refined()):
        h = build_hull(spec, 0, grid)
        err = np.abs(np.array([hull_section_sum(h, p) for p in ps]) - target)
        rows.append((h.tolerance, float(err.max())))
    (tol0, err0), (tol1, err1) = rows
    ok = err0 <= tol0 and err1 <= tol1 and tol1 < tol0 and err1 < err0
    report(11, "section vs closed form", ok,
           f"err {err0:.2e}->{err1:.2e}, tol {tol0:.2e}->{tol1:.2e}")
    assert ok


def test_12_deterministic_verify(report):
    cmd = [sys.executable, "-m", "spectra", "verify", "--seed", "0"]
    env = {k: v for k, v in __import__("os").environ.items() if k != "SOURCE_DATE_EPOCH"}
    a = subprocess.run(cmd, capture_output=True, env=env, cwd=ROOT)
    b = subprocess.run(cmd, capture_output=True, env=env, cwd=ROOT)
    ok = a.returncode == b.returncode == 0 and a.stdout == b.stdout and len(a.stdout) > 0
    report(12, "deterministic verify", ok, f"{len(a.stdout)} bytes")
    assert ok
