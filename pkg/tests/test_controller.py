import numpy as np
import pytest

from densnav import basis as ba
from densnav import controller as co
from densnav import dynamics as dy
from densnav import navprog as nv
from densnav import terrain as tr


@pytest.fixture
def D():
    return ba.build_grid_dictionary(dy.Box([0, 0, -np.pi], [4, 4, np.pi]), (5, 5, 4), 1.2, (2,))


def test_zero_w_gives_zero_input(D):
    ctl = co.FeedbackController(D, np.ones(D.size), (np.zeros(D.size), np.zeros(D.size)), (3, 3), 1e-6)
    X = np.random.default_rng(0).uniform(D.domain.lo, D.domain.hi, (100, 3))
    np.testing.assert_array_equal(ctl(X), 0.0)


def test_ratio_arithmetic(D):
    x = np.array([2.0, 2.0, 0.0])
    psi = D(x)
    v = 2 * np.ones(D.size) / psi.sum()
    w1 = np.ones(D.size) / psi.sum()
    ctl = co.FeedbackController(D, v, (w1, np.zeros(D.size)), (3, 3), 1e-6)
    np.testing.assert_allclose(co.eval_control(ctl, x), [0.5, 0.0], atol=1e-12)


def test_clip_and_saturation_flag(D):
    v = np.ones(D.size)
    ctl = co.FeedbackController(D, v, (5 * v, np.zeros(D.size)), (3, 3), 1e-6)
    u, info = co.eval_control(ctl, np.array([1.0, 1.0, 0.3]), return_info=True)
    assert u[0] == 3.0 and info["saturated"] and not info["fallback"]


def test_non_finite_coefficients_rejected(D):
    v = np.ones(D.size)
    v[3] = np.nan
    with pytest.raises(co.ControllerError):
        co.FeedbackController(D, v, (v, v), (3, 3), 1e-6)


def test_fallback_heads_to_target(D):
    ctl = co.FeedbackController(D, np.zeros(D.size), (np.zeros(D.size),) * 2, (3, 3), 1e-6,
                                target=(0.0, 0.0), heading_dim=2)
    # facing away from the target at (0, 0): turn at the limit
    u, info = co.eval_control(ctl, np.array([2.0, 0.0, 0.0]), return_info=True)
    assert info["fallback"] and u[0] == 1.5 and abs(u[1]) == 3.0
    # already facing it: no turning
    u = co.eval_control(ctl, np.array([2.0, 0.0, -np.pi]))
    assert u[1] == pytest.approx(0.0, abs=1e-12)


def test_ratio_invariance_under_scaling(small):
    problem, sol, _ = small
    D = problem.dictionary
    a = co.FeedbackController(D, sol.v, tuple(sol.w), (3, 3), 1e-12)
    b = co.FeedbackController(D, 7.0 * sol.v, tuple(7.0 * w for w in sol.w), (3, 3), 7e-12)
    X = np.random.default_rng(1).uniform(D.domain.lo, D.domain.hi, (500, 3))
    np.testing.assert_allclose(a(X), b(X), rtol=1e-10, atol=1e-12)


def test_inputs_within_limits(small):
    problem, sol, _ = small
    D = problem.dictionary
    ctl = co.controller_from_solution(D, sol, (3, 3), problem.grid, (0, 0), 2)
    X = np.random.default_rng(2).uniform(D.domain.lo, D.domain.hi, (100_000, 3))
    assert np.all(np.abs(ctl(X)) <= 3.0)


def test_deterministic(small):
    problem, sol, _ = small
    ctl = co.controller_from_solution(problem.dictionary, sol, (3, 3), problem.grid, (0, 0), 2)
    x = np.array([4.0, 5.0, 1.0])
    np.testing.assert_array_equal(co.eval_control(ctl, x), co.eval_control(ctl, x))


def test_zero_controller_never_succeeds(small):
    problem, _, _ = small
    car = dy.make_system("dubins")
    N = problem.dictionary.size
    ctl = co.FeedbackController(problem.dictionary, np.ones(N), (np.zeros(N),) * 2, (3, 3), 1e-9)
    m = co.evaluate_policy(car, ctl, problem, 5, 0.01, 1.0, seed=0)
    assert m.success_rate == 0.0 and m.saturation_fraction == 0.0
    assert all(c > 0 for c in m.trav_cost_per_run)


def test_start_inside_target_succeeds_immediately(small):
    from dataclasses import replace

    problem, _, _ = small
    car = dy.make_system("dubins")
    N = problem.dictionary.size
    ctl = co.FeedbackController(problem.dictionary, np.ones(N), (np.zeros(N),) * 2, (3, 3), 1e-9)
    p = replace(problem, XT=tr.Ball((5.5, 7.5), 2.0))
    m = co.evaluate_policy(car, ctl, p, 5, 0.01, 1.0, seed=0)
    assert m.success_rate == 1.0
    assert m.trav_cost_per_run == [0.0] * 5


def test_initial_samples_follow_region(small):
    problem, _, _ = small
    car = dy.make_system("dubins")
    X = co.sample_initial_states(car, problem.X0, problem.h0, 200, seed=4)
    assert X.shape == (200, 3) and np.all(problem.X0.contains(X))
    again = co.sample_initial_states(car, problem.X0, problem.h0, 200, seed=4)
    np.testing.assert_array_equal(X, again)


def test_density_grid_zero_and_peak(D, tmp_path):
    zero = co.FeedbackController(D, np.zeros(D.size), (np.zeros(D.size),) * 2, (3, 3), 1e-6)
    R = co.export_density_grid(zero, 0, 0, 0.1, 0.1, 41, 41, path=tmp_path / "z.raster")
    assert np.all(R == 0) and (tmp_path / "z.raster").exists()
    k = int(np.flatnonzero((D.centers[:, 0] == 1) & (D.centers[:, 1] == 3) & (D.centers[:, 2] == 0))[0])
    e = np.zeros(D.size)
    e[k] = 1.0
    ctl = co.FeedbackController(D, e, (np.zeros(D.size),) * 2, (3, 3), 1e-6)
    R = co.export_density_grid(ctl, 0, 0, 0.1, 0.1, 41, 41, theta=0.0)
    j, i = np.unravel_index(np.argmax(R), R.shape)
    assert (i * 0.1, j * 0.1) == pytest.approx((1.0, 3.0))


def test_density_suppressed_over_obstacle(small):
    problem, sol, _ = small
    ctl = co.FeedbackController(problem.dictionary, sol.v, tuple(sol.w), (3, 3), 1e-9)
    R = co.export_density_grid(ctl, -3, -3, 0.05, 0.05, 241, 241, theta=0.0)
    xs = -3 + 0.05 * np.arange(241)
    gx, gy = np.meshgrid(xs, xs)
    inside = np.hypot(gx - 3, gy - 4) < 1
    assert R[inside].max() <= 1e-6 * R.max()


def test_metrics_json(tmp_path):
    m = co.RunMetrics(0.5, 0.0, 0.0, [1.0, 3.0], [2.0, 2.0], 0.1, 2, [True, False], [[1, 1], [2, 2]])
    m.save_json(tmp_path / "m.json")
    import json
    d = json.loads((tmp_path / "m.json").read_text())
    assert d["mean_trav_cost"] == 2.0 and d["success_rate"] == 0.5
