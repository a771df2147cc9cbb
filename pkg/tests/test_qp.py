import numpy as np
import pytest

from gpfollow.qp import QPInfeasible, solve_qp
from oracles import qp_enumerate


def _random_instance(rng, n, m):
    L = rng.normal(size=(n, n))
    H = L @ L.T + 0.1 * np.eye(n)
    g = rng.normal(size=n)
    C = rng.normal(size=(m, n))
    x_feas = rng.normal(size=n)
    b = C @ x_feas - rng.uniform(0, 1, size=m)
    return H, g, C, b


def test_unconstrained():
    H = np.array([[2.0, 0.5], [0.5, 1.0]])
    g = np.array([1.0, -1.0])
    res = solve_qp(H, g)
    np.testing.assert_allclose(H @ res.x, -g, atol=1e-12)
    assert res.active == []


def test_single_active_bound():
    # min 1/2 x^2 - 2x s.t. x <= 1
    res = solve_qp(np.eye(1), np.array([-2.0]), -np.eye(1), np.array([-1.0]))
    np.testing.assert_allclose(res.x, [1.0])
    assert res.active == [0]
    np.testing.assert_allclose(res.multipliers, [1.0])


@pytest.mark.parametrize("seed", range(40))
def test_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(2, 5)), int(rng.integers(1, 7))
    H, g, C, b = _random_instance(rng, n, m)
    res = solve_qp(H, g, C, b)
    # oracle uses the M z <= h convention
    _, best = qp_enumerate(H, g, -C, -b)
    assert np.all(C @ res.x >= b - 1e-9)
    val = 0.5 * res.x @ H @ res.x + g @ res.x
    assert val == pytest.approx(best, rel=1e-8, abs=1e-10)
    assert np.all(res.multipliers >= -1e-10)


def test_infeasible_constraints():
    C = np.array([[1.0], [-1.0]])
    b = np.array([1.0, 0.0])  # x >= 1 and x <= 0
    with pytest.raises(QPInfeasible):
        solve_qp(np.eye(1), np.zeros(1), C, b)
