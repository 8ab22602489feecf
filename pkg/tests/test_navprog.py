from dataclasses import replace

import numpy as np
import pytest

from densnav import basis as ba
from densnav import navprog as nv


def test_layout_counts(small):
    problem, _, lp = small
    N = problem.dictionary.size
    assert lp.n_vars == 5 * N
    n_target = int(nv.target_centres(problem).sum())
    assert lp.A_eq.shape[0] == N - n_target + 1
    # 4 rows per input (two slack, two control limit) plus the budget row
    assert lp.A_ub.shape[0] == 8 * N + 1


def test_alpha_zero_objective_only_on_slacks(small):
    problem, _, _ = small
    lp = nv.assemble(replace(problem, alpha=0.0, gamma=1.0))
    N = lp.N
    assert np.all(lp.c[:3 * N] == 0)
    assert np.any(lp.c[3 * N:] > 0)


def test_no_obstacle_drops_row_and_budget_monotone(small):
    problem, _, _ = small
    free = replace(problem, Xu=None)
    lp0 = nv.assemble(free)
    assert lp0.A_eq.shape[0] == problem.dictionary.size - int(nv.target_centres(problem).sum())
    loose, _ = nv.solve_problem(replace(free, gamma=None))
    d2v = loose.report["d2v"]
    tight, _ = nv.solve_problem(replace(free, gamma=0.9 * d2v))
    looser, _ = nv.solve_problem(replace(free, gamma=1.5 * d2v))
    assert tight.solver_status == looser.solver_status == "optimal"
    assert looser.objective <= tight.objective + 1e-9


def test_solution_optimal_and_feasible(small):
    _, sol, lp = small
    assert sol.solver_status == "optimal"
    assert sol.kkt_residuals["primal_scaled"] <= 1e-6
    assert np.all(sol.v >= -1e-9)


def test_slack_tight(small):
    _, sol, lp = small
    pos = lp.data["D2"] > 0
    for wj, rj in zip(sol.w, sol.r):
        np.testing.assert_allclose(rj[pos], np.abs(wj[pos]), atol=1e-6)


def test_obstacle_suppression(small):
    _, sol, lp = small
    d1t = lp.data["d1_truncated"]
    assert np.all(sol.v[d1t > 0] <= 1e-6)


def test_budget_respected(small):
    _, sol, lp = small
    assert sol.report["d2v"] <= sol.gamma + 1e-6


def test_homogeneity(small):
    problem, _, _ = small
    base = replace(problem, gamma=None)
    s1, _ = nv.solve_problem(replace(base, gamma=10.0))
    s3, _ = nv.solve_problem(replace(base, gamma=30.0,
                                     h0_coeffs=ba.BasisCoefficients(3 * problem.h0_coeffs.values, "h0")))
    assert s3.objective == pytest.approx(3 * s1.objective, rel=1e-6)
    np.testing.assert_allclose(s3.v, 3 * s1.v, atol=1e-6 * np.abs(s3.v).max())


def test_control_limit_pointwise(small):
    problem, sol, _ = small
    D = problem.dictionary
    rng = np.random.default_rng(0)
    X = rng.uniform(D.domain.lo, D.domain.hi, (10_000, 3))
    P = D(X)
    rho = P @ sol.v
    for wj, Lj in zip(sol.w, problem.L):
        # coefficient rows are tight only up to solver tolerance
        assert np.all(np.abs(P @ wj) <= Lj * rho + 1e-7)


def test_export_round_trip(small, tmp_path):
    _, _, lp = small
    nv.export_standard_form(lp, tmp_path / "p.navlp")
    back = nv.import_standard_form(tmp_path / "p.navlp")
    np.testing.assert_array_equal(back.c, lp.c)
    assert (back.A_eq != lp.A_eq).nnz == 0 and (back.A_ub != lp.A_ub).nnz == 0
    np.testing.assert_array_equal(back.b_ub, lp.b_ub)
    np.testing.assert_array_equal(back.lb, lp.lb)
    assert (back.N, back.m) == (lp.N, lp.m)


def test_export_counts_match_layout(small, tmp_path):
    _, _, lp = small
    nv.export_standard_form(lp, tmp_path / "p.navlp")
    text = (tmp_path / "p.navlp").read_text().split("\n")
    n, p, q = map(int, text[0].split()[2:5])
    assert n == 5 * lp.N and p == lp.A_eq.shape[0] and q == lp.A_ub.shape[0]
    eq = text.index("EQ")
    ineq = text.index("INEQ")
    n_eq_lines = ineq - eq - 1
    assert n_eq_lines == lp.A_eq.nnz + p


def test_export_without_inequalities(tmp_path):
    import scipy.sparse as sps

    lp = nv.LinearProgram(np.array([1.0, 2.0]), sps.csr_matrix([[1.0, 1.0]]), np.array([1.0]),
                          sps.csr_matrix((0, 2)), np.zeros(0), np.zeros(2), np.full(2, np.inf))
    nv.export_standard_form(lp, tmp_path / "e.navlp")
    assert "INEQ" not in (tmp_path / "e.navlp").read_text()
    back = nv.import_standard_form(tmp_path / "e.navlp")
    assert back.A_ub.shape == (0, 2)
    np.testing.assert_array_equal(back.c, lp.c)


def test_curvature_rows(small):
    problem, _, _ = small
    lp = nv.assemble(replace(problem, curvature_bound=0.5, gamma=1.0))
    assert lp.A_ub.shape[0] == 10 * lp.N + 1
    sol = nv.solve(lp)
    if sol.solver_status == "optimal":
        assert np.all(sol.w[0] >= -1e-7)
        assert np.all(0.5 * sol.r[1] - sol.w[0] <= 1e-7)


def test_dimension_mismatch(small):
    problem, _, _ = small
    with pytest.raises(nv.AssemblyError):
        nv.assemble(replace(problem, h0_coeffs=ba.BasisCoefficients(np.zeros(3), "h0")))


def test_solution_save_load(small, tmp_path):
    _, sol, _ = small
    sol.save(tmp_path / "s")
    back = nv.DensitySolution.load(tmp_path / "s")
    np.testing.assert_array_equal(back.v, sol.v)
    assert back.solver_status == sol.solver_status and back.gamma == sol.gamma
