import itertools

import numpy as np
import pytest
import scipy.sparse as sps

from densnav import ipm
from densnav import navprog as nv


def vertex_oracle(c, G, h):
    """Best objective over all basic feasible points of G x <= h."""
    n = c.size
    best = np.inf
    for rows in itertools.combinations(range(len(h)), n):
        A = G[list(rows)]
        if abs(np.linalg.det(A)) < 1e-10:
            continue
        x = np.linalg.solve(A, h[list(rows)])
        if np.all(G @ x <= h + 1e-9):
            best = min(best, c @ x)
    return best


def random_lp(rng, n, k):
    # random cuts around a point known to be feasible, inside a box
    x0 = rng.uniform(-1, 1, n)
    A = rng.standard_normal((k, n))
    h = A @ x0 + rng.uniform(0.1, 1.0, k)
    G = np.vstack([A, np.eye(n), -np.eye(n)])
    h = np.concatenate([h, np.full(2 * n, 3.0)])
    return rng.standard_normal(n), G, h


@pytest.mark.parametrize("seed", range(8))
def test_builtin_matches_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = 2 + seed % 3
    c, G, h = random_lp(rng, n, 6)
    res = ipm.solve_lp(c, None, None, G, h)
    assert res.status == "optimal"
    assert res.objective == pytest.approx(vertex_oracle(c, G, h), abs=1e-6)


def _as_lp(c, G, h, A=None, b=None):
    n = c.size
    A = sps.csr_matrix((0, n)) if A is None else sps.csr_matrix(A)
    b = np.zeros(0) if b is None else np.asarray(b, float)
    return nv.LinearProgram(c, A, b, sps.csr_matrix(G), h, np.full(n, -np.inf), np.full(n, np.inf))


@pytest.mark.parametrize("method", ["builtin", "highs-ipm"])
@pytest.mark.parametrize("seed", range(4))
def test_solve_matches_vertex_enumeration(method, seed):
    rng = np.random.default_rng(100 + seed)
    c, G, h = random_lp(rng, 3, 5)
    sol = nv.solve(_as_lp(c, G, h), method=method)
    assert sol.solver_status == "optimal"
    assert sol.objective == pytest.approx(vertex_oracle(c, G, h), abs=1e-6)


@pytest.mark.parametrize("method", ["builtin", "highs-ipm"])
def test_scalar_lp(method):
    # min x s.t. x >= 1
    lp = _as_lp(np.array([1.0]), np.array([[-1.0]]), np.array([-1.0]))
    sol = nv.solve(lp, method=method)
    assert sol.solver_status == "optimal"
    assert sol.objective == pytest.approx(1.0, abs=1e-8)


def test_builtin_scalar_lp_direct():
    res = ipm.solve_lp(np.array([1.0]), None, None, np.array([[-1.0]]), np.array([-1.0]))
    assert res.status == "optimal" and res.x[0] == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("method", ["builtin", "highs-ipm"])
def test_contradictory_rows_infeasible(method):
    # x >= 1 and x <= 0, written with two variables so presolve keeps the rows
    G = np.array([[-1.0, -1.0], [1.0, 1.0]])
    lp = _as_lp(np.array([1.0, 0.0]), G, np.array([-1.0, 0.0]))
    assert nv.solve(lp, method=method).solver_status == "infeasible"


def test_builtin_infeasible_certificate():
    res = ipm.solve_lp(np.array([1.0]), None, None, np.array([[-1.0], [1.0]]), np.array([-1.0, 0.0]))
    assert res.status == "infeasible"


def test_builtin_with_equalities():
    # min x1 + 2 x2  s.t.  x1 + x2 = 1, x >= 0  ->  x = (1, 0)
    res = ipm.solve_lp(np.array([1.0, 2.0]), np.array([[1.0, 1.0]]), np.array([1.0]),
                       -np.eye(2), np.zeros(2))
    assert res.status == "optimal"
    np.testing.assert_allclose(res.x, [1.0, 0.0], atol=1e-7)


def test_builtin_unbounded():
    res = ipm.solve_lp(np.array([-1.0]), None, None, np.array([[-1.0]]), np.array([0.0]))
    assert res.status == "unbounded"
