import math
import time
import warnings

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from spectra.channel import ChannelSpec, symmetric_two_user, total_rates, weighted_rate
from spectra.symmetric import (OutOfRangeWarning, TangencyError, build_allocation_flat, f_star,
                               f_star_slope, h_star, h_star_slope, p_h_from_p_f, r_star_curve,
                               r_star_flat, solve_symmetric_selective, solve_tangency,
                               tangency_residual)


def sharing_sum(alpha, p1, p2):
    return math.log1p(p1 / (1 + alpha * p2)) + math.log1p(p2 / (1 + alpha * p1))


def envelope_oracle(alpha, ps, pmax=400.0, n=4001):
    """Concave envelope of max(best split sharing, FDMA) by pairwise chords."""
    x = np.linspace(0, pmax, n)
    share = np.array([max(sharing_sum(alpha, a, xi - a) for a in np.linspace(0, xi, 41))
                      for xi in x])
    u = np.maximum(share, np.log1p(x))
    out = []
    for p in ps:
        lo, hi = x <= p, x >= p
        xa, ua = x[lo][:, None], u[lo][:, None]
        xb, ub = x[hi][None, :], u[hi][None, :]
        span = np.where(xb > xa, xb - xa, 1.0)
        lam = np.where(xb > xa, (p - xa) / span, 0.0)
        out.append(float(np.max(ua + lam * (ub - ua))))
    return np.array(out)


def test_f_star_values():
    assert f_star(0.1, 0.0) == 0.0
    assert f_star(0.1, 80.0) == pytest.approx(math.log(81), rel=1e-14)
    with pytest.raises(ValueError):
        f_star(0.6, 1.0)
    with pytest.warns(OutOfRangeWarning):
        f_star(0.1, 100.0)


def test_f_star_is_best_split():
    # equal split maximizes the sharing sum-rate below the crossover
    for alpha, p in [(0.1, 54.931), (0.1, 20.0), (0.3, 2.0), (0.05, 300.0)]:
        res = minimize_scalar(lambda a: -sharing_sum(alpha, a, p - a), bounds=(0, p),
                              method="bounded", options={"xatol": 1e-10})
        assert res.x == pytest.approx(p / 2, rel=1e-4)
        assert -res.fun == pytest.approx(f_star(alpha, p), rel=1e-12)


def test_h_star_values():
    assert h_star(0.0) == 0.0
    assert h_star(80.0) == pytest.approx(math.log(81))
    assert h_star(115.938) == pytest.approx(math.log(116.938))


def test_tangency_alpha_01():
    t = solve_tangency(0.1)
    assert t.p_f == pytest.approx(54.931, abs=1e-3)
    assert t.p_h == pytest.approx(115.938, abs=1e-3)
    assert t.p_0 == pytest.approx(80.0)
    assert abs(tangency_residual(0.1, t.p_f)) < 1e-10


@pytest.mark.parametrize("alpha", [0.01, 0.05, 0.1, 0.25, 0.4, 0.49])
def test_tangency_invariants(alpha):
    t = solve_tangency(alpha)
    assert 0 < t.p_f < t.p_0 < t.p_h
    chord = (h_star(t.p_h) - f_star(alpha, t.p_f)) / (t.p_h - t.p_f)
    assert f_star_slope(alpha, t.p_f) == pytest.approx(chord, rel=1e-8)
    assert h_star_slope(t.p_h) == pytest.approx(chord, rel=1e-8)
    assert t.p_h == p_h_from_p_f(alpha, t.p_f)


def test_tangency_quarter_concave_envelope():
    t = solve_tangency(0.25)
    p = np.linspace(0, 3 * t.p_h, 1000)
    r = r_star_curve(0.25, p)
    assert np.all(np.diff(r, 2) <= 1e-10)
    assert np.all(np.diff(r) > 0)


def test_tangency_rejects_bad_alpha():
    with pytest.raises(ValueError):
        solve_tangency(0.5)


def test_tangency_error_type():
    err = TangencyError("x", endpoints=(1.0, 2.0))
    assert err.endpoints == (1.0, 2.0)


def test_slope_inequality_at_crossover(rng):
    for alpha in rng.uniform(0.001, 0.499, 100):
        p0 = 2 * (1 / (2 * alpha ** 2) - 1 / alpha)
        fs = f_star_slope(alpha, p0)
        hs = h_star_slope(p0)
        assert fs == pytest.approx(4 * alpha ** 3 / (1 - alpha), rel=1e-9)
        assert hs == pytest.approx(alpha ** 2 / (1 - alpha) ** 2, rel=1e-9)
        assert fs < hs


def test_r_star_regimes():
    t = solve_tangency(0.1)
    e = r_star_flat(0.1, 40.0)
    assert e.regime == "sharing" and e.mix == 0 and e.value == f_star(0.1, 40.0)
    e = r_star_flat(0.1, 200.0)
    assert e.regime == "fdma" and e.mix == 1 and e.value == pytest.approx(math.log(201))
    e = r_star_flat(0.1, 100.0)
    lam = (100 - t.p_f) / (t.p_h - t.p_f)
    assert e.regime == "mixture" and e.mix == pytest.approx(lam)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OutOfRangeWarning)
        assert e.value >= max(f_star(0.1, 100.0), h_star(100.0))
    assert r_star_flat(0.7, 3.0).value == math.log(4)
    assert r_star_flat(0.0, 3.0).value == pytest.approx(2 * math.log(2.5))


def test_r_star_matches_chord_oracle():
    ps = [10.0, 40.0, 70.0, 100.0, 150.0]
    ref = envelope_oracle(0.1, ps)
    got = r_star_curve(0.1, ps)
    assert np.allclose(got, ref, atol=1e-4)
    assert np.all(got >= ref - 1e-9)


def test_allocation_layouts():
    a = build_allocation_flat(0.1, 40.0)
    assert len(a.pieces) == 1 and a.pieces[0].psd == (20.0, 20.0)
    a = build_allocation_flat(0.1, 200.0)
    assert [p.psd for p in a.pieces] == [(200.0, 0.0), (0.0, 200.0)]
    t = solve_tangency(0.1)
    a = build_allocation_flat(0.1, 100.0)
    lam = (100 - t.p_f) / (t.p_h - t.p_f)
    assert [p.width for p in a.pieces] == pytest.approx([1 - lam, lam / 2, lam / 2])
    assert (1 - lam) * t.p_f + lam * t.p_h == pytest.approx(100.0)
    assert a.powers() == pytest.approx([50.0, 50.0], rel=1e-12)
    spec = symmetric_two_user([0.1], sum_power=100)
    assert weighted_rate(spec, a) == pytest.approx(r_star_flat(0.1, 100).value, abs=1e-9)


def test_selective_single_subchannel():
    spec = symmetric_two_user([0.1], sum_power=100)
    res = solve_symmetric_selective(spec)
    assert res.value == pytest.approx(r_star_flat(0.1, 100).value, rel=1e-12)


def test_selective_noise_scaling():
    spec = symmetric_two_user([0.2], noise=2.0, sum_power=30)
    res = solve_symmetric_selective(spec)
    assert res.value == pytest.approx(r_star_flat(0.2, 15.0).value, rel=1e-12)


def test_selective_identical_subchannels_split_equally():
    spec = symmetric_two_user([0.1, 0.1], sum_power=100)
    res = solve_symmetric_selective(spec)
    assert res.sum_psd == pytest.approx([100, 100])
    assert res.value == pytest.approx(r_star_flat(0.1, 100).value, rel=1e-12)
    assert res.powers == pytest.approx([50, 50], rel=1e-12)


def test_selective_three_subchannels():
    spec = symmetric_two_user([0.05, 0.2, 0.45], [0.25, 0.35, 0.4], sum_power=60)
    res = solve_symmetric_selective(spec)
    # independent check: concave maximization of sum b_m r*(q_m) over the budget simplex
    b = spec.bandwidths

    def neg(x):
        q2 = (60 - b[0] * x[0] - b[1] * x[1]) / b[2]
        if q2 < 0:
            return 1e9
        return -(b[0] * r_star_flat(0.05, x[0]).value + b[1] * r_star_flat(0.2, x[1]).value
                 + b[2] * r_star_flat(0.45, q2).value)

    from scipy.optimize import minimize
    ref = minimize(neg, [60, 60], method="Nelder-Mead",
                   options={"xatol": 1e-9, "fatol": 1e-13, "maxiter": 20000})
    assert res.value == pytest.approx(-ref.fun, abs=1e-8)
    assert res.value == pytest.approx(4.370249582373136, rel=1e-12)
    assert res.regimes == ("sharing", "fdma", "fdma")
    assert res.powers == pytest.approx([30, 30], rel=1e-10)
    assert weighted_rate(spec, res.allocation) == pytest.approx(res.value, abs=1e-9)
    assert res.metadata["sum_budget"] == 60 and res.metadata["individual_budget"] == 30


def test_selective_mixture_budget_met_exactly():
    spec = symmetric_two_user([0.1, 0.1, 0.3], [0.2, 0.3, 0.5], sum_power=70)
    res = solve_symmetric_selective(spec)
    assert res.powers.sum() == pytest.approx(70, rel=1e-8)
    assert total_rates(spec, res.allocation).sum() == pytest.approx(res.value, abs=1e-9)


def test_selective_flags_strong_subchannels():
    spec = symmetric_two_user([0.1, 0.8], sum_power=10)
    res = solve_symmetric_selective(spec)
    assert res.metadata["fdma_only_subchannels"] == [1]


def test_selective_rejects_asymmetric():
    a = np.zeros((1, 2, 2))
    a[0, 0, 1], a[0, 1, 0] = 0.1, 0.2
    spec = ChannelSpec([1.0], a, np.ones((1, 2)), [1, 1], [1, 1])
    with pytest.raises(ValueError):
        solve_symmetric_selective(spec)
    with pytest.raises(ValueError):
        solve_symmetric_selective(symmetric_two_user([0.1]), sum_budget=-1)


def test_selective_zero_budget():
    res = solve_symmetric_selective(symmetric_two_user([0.1, 0.2], sum_power=0.0))
    assert res.value == 0.0


def test_tangency_fast():
    solve_tangency.cache_clear()
    t0 = time.perf_counter()
    solve_tangency(0.1)
    assert time.perf_counter() - t0 < 0.01
