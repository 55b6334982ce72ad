"""Independent reference solutions used by the tests."""

import numpy as np
from scipy.optimize import linprog


def min_row_value(M: np.ndarray) -> float:
    """min over row mixtures of the max over columns of x^T M (row player minimizes)."""
    m, n = M.shape
    # variables (x_1..x_m, v): minimize v s.t. M^T x <= v, sum x = 1, x >= 0
    c = np.r_[np.zeros(m), 1.0]
    A_ub = np.c_[M.T, -np.ones(n)]
    A_eq = np.r_[np.ones(m), 0.0][None, :]
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(n), A_eq=A_eq, b_eq=[1.0],
                  bounds=[(0, None)] * m + [(None, None)], method="highs")
    assert res.status == 0
    return float(res.fun)


def grid_game_value(payoff, box1, box2, n=201) -> float:
    """Value of the zero-sum game where x (rows) minimizes and z (columns) maximizes,
    with both univariate strategy sets discretized to n points."""
    xs = np.linspace(*box1, n)
    zs = np.linspace(*box2, n)
    X, Z = np.meshgrid(xs, zs, indexing="ij")
    M = payoff.evaluate_many(np.column_stack([X.ravel(), Z.ravel()])).reshape(n, n)
    return min_row_value(M)


def discounted_fixed_point(G, F, Q, lam, tol=1e-10, max_iter=100_000) -> float:
    """Value v of the discounted absorbing matrix game (row player maximizes):
    v = val(lam*G*Q + (1 - lam)*(Q*v + (1 - Q)*F)), by fixed-point iteration."""
    v = 0.0
    for _ in range(max_iter):
        M = lam * G * Q + (1 - lam) * (Q * v + (1 - Q) * F)
        new = -min_row_value(-M)
        if abs(new - v) <= tol:
            return new
        v = new
    raise RuntimeError("fixed-point iteration did not converge")
