"""Feedback law u = rho_bar / rho from density coefficients and closed-loop metrics."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .basis import eval_basis
from .dynamics import simulate_batch, wrap_angle
from .terrain import write_raster

log = logging.getLogger(__name__)


class ControllerError(ValueError):
    pass


@dataclass(frozen=True)
class FeedbackController:
    """k(x) = rho_bar(x) / rho(x), clipped to the control limits.

    Where rho falls below ``rho_min`` the ratio carries no information and a
    fallback is used: for a car-like system (``heading_dim`` set) it drives
    toward ``target`` at half the speed limit with proportional heading
    control; otherwise it returns zero.
    """

    dictionary: object
    v: np.ndarray
    w: tuple
    L: tuple
    rho_min: float
    target: tuple | None = None
    heading_dim: int | None = None
    heading_gain: float = 3.0

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        W = np.vstack([np.asarray(wj, dtype=float) for wj in self.w])
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(W))):
            raise ControllerError("controller coefficients must be finite")
        if W.shape != (len(self.L), v.size):
            raise ControllerError("need one coefficient vector and one limit per input")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "w", W)
        object.__setattr__(self, "L", np.asarray(self.L, dtype=float))

    def densities(self, X):
        P = eval_basis(self.dictionary, np.atleast_2d(X))
        return P @ self.v, P @ self.w.T

    def _fallback(self, X):
        U = np.zeros((len(X), len(self.L)))
        if self.heading_dim is None or self.target is None:
            return U
        tx, ty = self.target
        head = np.arctan2(ty - X[:, 1], tx - X[:, 0])
        err = wrap_angle(head - X[:, self.heading_dim])
        U[:, 0] = self.L[0] / 2
        U[:, 1] = np.clip(self.heading_gain * err, -self.L[1], self.L[1])
        return U

    def evaluate(self, X):
        """Inputs for a batch of states plus saturation and fallback masks."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        rho, rbar = self.densities(X)
        ok = rho >= self.rho_min
        U = np.empty_like(rbar)
        U[ok] = rbar[ok] / rho[ok, None]
        if (~ok).any():
            U[~ok] = self._fallback(X[~ok])
        sat = np.any(np.abs(U) > self.L, axis=1)
        if sat.any():
            log.debug("control saturated at %d of %d states", int(sat.sum()), len(X))
        return np.clip(U, -self.L, self.L), sat, ~ok

    def __call__(self, X):
        return self.evaluate(X)[0]


def eval_control(ctl, x, return_info=False):
    """Control input at one state."""
    U, sat, fb = ctl.evaluate(np.asarray(x, dtype=float)[None])
    if return_info:
        return U[0], {"saturated": bool(sat[0]), "fallback": bool(fb[0])}
    return U[0]


def controller_from_solution(dictionary, solution, L, grid, target=None, heading_dim=None,
                             rho_floor=1e-6):
    """Controller with rho_min = rho_floor * max of rho over the quadrature nodes."""
    ctl0 = FeedbackController(dictionary, solution.v, tuple(solution.w), tuple(L), 0.0)
    rho = np.concatenate([ctl0.densities(grid.nodes[i:i + 4096])[0]
                          for i in range(0, grid.size, 4096)])
    rho_min = rho_floor * max(float(rho.max()), 0.0)
    if rho_min <= 0:
        rho_min = np.finfo(float).tiny
    return FeedbackController(dictionary, solution.v, tuple(solution.w), tuple(L), rho_min,
                              None if target is None else tuple(target), heading_dim)


@dataclass
class RunMetrics:
    success_rate: float
    obstacle_occupancy: float
    obstacle_occupancy_successful: float
    trav_cost_per_run: list
    weighted_cost_per_run: list
    saturation_fraction: float
    n_samples: int
    successes: list = field(default_factory=list)
    max_abs_input: list = field(default_factory=list)

    @property
    def mean_trav_cost(self):
        return float(np.mean(self.trav_cost_per_run))

    @property
    def mean_weighted_cost(self):
        return float(np.mean(self.weighted_cost_per_run))

    def to_dict(self):
        d = asdict(self)
        d["mean_trav_cost"] = self.mean_trav_cost
        d["mean_weighted_cost"] = self.mean_weighted_cost
        return d

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def sample_initial_states(sys, region, h0, n, seed, max_rounds=1000):
    """Rejection-sample n states with density proportional to h0 on ``region``.

    Planar coordinates are proposed uniformly over the region's bounding box
    and the remaining coordinates uniformly over the system domain.
    """
    rng = np.random.default_rng(seed)
    lo_p, hi_p = region.bounds()
    dims = list(region.dims)
    lo = sys.domain.lo.copy()
    hi = sys.domain.hi.copy()
    lo[dims] = np.maximum(lo[dims], lo_p)
    hi[dims] = np.minimum(hi[dims], hi_p)
    probe = lo + (hi - lo) * rng.random((4096, sys.state_dim))
    hmax = float(np.max(h0(probe), initial=0.0))
    centre = None
    if hasattr(region, "center"):
        c = np.zeros(sys.state_dim)
        c[dims] = region.center
        centre = c
        hmax = max(hmax, float(h0(c[None])[0]))
    if hmax <= 0:
        raise ValueError("initial density vanishes on the initial set")
    out, have = [], 0
    for _ in range(max_rounds):
        X = lo + (hi - lo) * rng.random((4 * n, sys.state_dim))
        acc = (rng.random(len(X)) * hmax < h0(X)) & region.contains(X)
        X = X[acc][: n - have]
        out.append(X)
        have += len(X)
        if have == n:
            return np.vstack(out)
    raise RuntimeError("rejection sampling of initial states did not finish")


def evaluate_policy(sys, ctl, problem, n_samples, dt, t_max, seed, h0=None, return_trajectories=False):
    """Closed-loop runs from h0-distributed initial states.

    A run succeeds once its planar position enters the target inflated by
    eps.  Costs are left-endpoint sums dt * sum b(x_k) and
    dt * sum (alpha b + beta b |u_k|_1) over the steps taken.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    h0 = h0 if h0 is not None else problem.h0
    X0 = sample_initial_states(sys, problem.X0, h0, n_samples, seed)
    goal = problem.XT.inflate(problem.eps)
    trajs = simulate_batch(sys, ctl, X0, dt, t_max, stop_set=goal.contains)
    b = problem.terrain
    trav, weighted, succ, umax, occ, occ_s = [], [], [], [], 0.0, 0.0
    sat_steps = steps = 0
    for tr in trajs:
        Xs, Us = tr.X[:-1], tr.U[:-1]
        ok = tr.status != "failed"
        reached = bool(goal.contains(tr.X[-1:])[0]) and ok
        succ.append(reached)
        bx = b(Xs) if len(Xs) else np.zeros(0)
        trav.append(float(dt * bx.sum()))
        u1 = np.abs(Us).sum(axis=1) if len(Us) else np.zeros(0)
        weighted.append(float(dt * (problem.alpha * bx + problem.beta * bx * u1).sum()))
        umax.append(np.abs(Us).max(axis=0).tolist() if len(Us) else [0.0] * len(ctl.L))
        if len(Us):
            sat_steps += int(np.any(np.abs(Us) >= ctl.L * (1 - 1e-12), axis=1).sum())
            steps += len(Us)
        if problem.Xu is not None:
            t_in = dt * float(problem.Xu.contains(tr.X).sum())
            occ += t_in
            occ_s += t_in if reached else 0.0
    metrics = RunMetrics(float(np.mean(succ)), occ, occ_s, trav, weighted,
                         sat_steps / steps if steps else 0.0, n_samples, succ, umax)
    return (metrics, trajs) if return_trajectories else metrics


def export_density_grid(ctl, x0, y0, dx, dy, nx, ny, theta=0.0, path=None, state_dim=3,
                        planar_dims=(0, 1), heading_dim=2):
    """rho on a planar lattice at fixed heading; optionally written as a raster."""
    xs = x0 + dx * np.arange(nx)
    ys = y0 + dy * np.arange(ny)
    gx, gy = np.meshgrid(xs, ys)
    X = np.zeros((gx.size, state_dim))
    X[:, planar_dims[0]] = gx.ravel()
    X[:, planar_dims[1]] = gy.ravel()
    if heading_dim is not None and heading_dim < state_dim:
        X[:, heading_dim] = theta
    vals = np.concatenate([ctl.densities(X[i:i + 4096])[0] for i in range(0, len(X), 4096)])
    R = vals.reshape(ny, nx)
    if path is not None:
        write_raster(path, x0, y0, dx, dy, R)
    return R
