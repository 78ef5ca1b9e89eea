import numpy as np
import pytest
from scipy.optimize import linprog

from spectra.lp import Infeasible, Unbounded, simplex


def random_lp(rng, m, n):
    """Feasible, bounded: ``A x = b`` from a known point plus ``sum x + s = cap``."""
    A = rng.uniform(0, 1, (m, n))
    x0 = rng.uniform(0, 1, n)
    b = A @ x0
    c = rng.normal(size=n)
    A = np.vstack([A, np.ones(n)])
    b = np.append(b, x0.sum() + 1.0)
    A = np.hstack([A, np.eye(m + 1)[:, -1:]])
    return np.append(c, 0.0), A, b


def test_matches_highs(rng):
    for _ in range(100):
        m, n = int(rng.integers(1, 6)), int(rng.integers(6, 30))
        c, A, b = random_lp(rng, m, n)
        ours = simplex(c, A, b)
        ref = linprog(-c, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
        assert ours.value == pytest.approx(-ref.fun, abs=1e-8)
        assert np.allclose(A @ ours.x, b, atol=1e-9)
        assert np.all(ours.x >= 0)
        # dual objective equals primal value
        assert ours.duals @ b == pytest.approx(ours.value, abs=1e-8)


def test_warm_basis():
    c = np.array([1.0, 2.0, 0.0])
    A = np.array([[1.0, 1.0, 1.0]])
    res = simplex(c, A, np.array([4.0]), basis=[2])
    assert res.value == 8.0 and res.x.tolist() == [0, 4, 0]


def test_negative_rhs_and_duals():
    # max -x s.t. -x = -3 -> x = 3, dual y with y * (-1) = -1 -> y = 1
    res = simplex(np.array([-1.0]), np.array([[-1.0]]), np.array([-3.0]))
    assert res.x[0] == pytest.approx(3.0)
    assert res.duals[0] == pytest.approx(1.0)


def test_redundant_rows():
    A = np.array([[1.0, 1.0], [2.0, 2.0]])
    res = simplex(np.array([1.0, 0.5]), A, np.array([1.0, 2.0]))
    assert res.value == pytest.approx(1.0)
    assert len(res.rows_kept) == 1


def test_infeasible_and_unbounded():
    with pytest.raises(Infeasible):
        simplex(np.ones(2), np.array([[1.0, 1.0]]), np.array([-1.0]))
    with pytest.raises(Unbounded):
        simplex(np.array([1.0, 0.0]), np.array([[1.0, -1.0]]), np.array([0.0]))


def test_deterministic(rng):
    c, A, b = random_lp(rng, 4, 40)
    c = np.round(c, 1)   # encourage ties
    r1, r2 = simplex(c, A, b), simplex(c, A, b)
    assert np.array_equal(r1.x, r2.x) and np.array_equal(r1.basis, r2.basis)


def test_degenerate_cycling_example():
    # Beale's example cycles under naive Dantzig pivoting
    c = np.array([0.75, -150, 0.02, -6, 0, 0, 0])
    A = np.array([[0.25, -60, -0.04, 9, 1, 0, 0],
                  [0.5, -90, -0.02, 3, 0, 1, 0],
                  [0, 0, 1, 0, 0, 0, 1]], dtype=float)
    b = np.array([0.0, 0.0, 1.0])
    res = simplex(c, A, b, basis=[4, 5, 6], bland_after=5)
    assert res.value == pytest.approx(0.05)
