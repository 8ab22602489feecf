"""Control-affine systems, RK4 integration and snapshot generation.

States are handled as arrays with the state on the last axis so that the
same code integrates one state or a batch of them.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np


class IntegrationError(RuntimeError):
    pass


class GenerationError(RuntimeError):
    pass


class SimulationError(RuntimeError):
    """Raised when a controller produces a non-finite input.

    The partial trajectory up to the failure is kept on ``trajectory``.
    """

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


def wrap_angle(a):
    """Map angles to the periodic interval [-pi, pi); in-range values are kept exactly."""
    a = np.asarray(a, dtype=float)
    inside = (a >= -np.pi) & (a < np.pi)
    w = (a + np.pi) % (2 * np.pi) - np.pi
    w = np.where(w >= np.pi, w - 2 * np.pi, w)
    return np.where(inside, a, w)


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-D arrays of equal length")
        if np.any(hi <= lo):
            raise ValueError("box upper bounds must exceed lower bounds")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self):
        return self.lo.size

    @property
    def volume(self):
        return float(np.prod(self.hi - self.lo))

    def contains(self, x, skip=()):
        """Membership test over the last axis, ignoring the axes in ``skip``."""
        x = np.asarray(x, dtype=float)
        keep = np.ones(self.dim, dtype=bool)
        keep[list(skip)] = False
        inside = (x >= self.lo) & (x <= self.hi)
        return np.all(inside[..., keep], axis=-1)

    def to_dict(self):
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}


@dataclass(frozen=True)
class ControlAffineSystem:
    """xdot = f(x) + g(x) u with vectorised f and g.

    ``f`` maps an (..., n) array to (..., n) and ``g`` maps it to (..., n, m).
    """

    name: str
    state_dim: int
    input_dim: int
    f: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    domain: Box
    angle_dims: tuple = ()

    def rhs(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        return self.f(x) + np.einsum("...ij,...j->...i", self.g(x), u)

    def in_domain(self, x):
        """Domain membership; angle coordinates are always admissible."""
        return self.domain.contains(x, skip=self.angle_dims)

    def wrap(self, x):
        if not self.angle_dims:
            return x
        x = np.array(x, dtype=float, copy=True)
        idx = list(self.angle_dims)
        x[..., idx] = wrap_angle(x[..., idx])
        return x


def _dubins_f(x):
    return np.zeros_like(x)


def _dubins_g(x):
    th = x[..., 2]
    g = np.zeros(x.shape + (2,))
    g[..., 0, 0] = np.cos(th)
    g[..., 1, 0] = np.sin(th)
    g[..., 2, 1] = 1.0
    return g


def dubins_car(lo=(-3.0, -3.0), hi=(9.0, 9.0)):
    """Kinematic Dubins car (x1, x2, heading) with inputs (speed, turn rate)."""
    box = Box(np.array([lo[0], lo[1], -np.pi]), np.array([hi[0], hi[1], np.pi]))
    return ControlAffineSystem("dubins", 3, 2, _dubins_f, _dubins_g, box, (2,))


def linear1d_test(lo=-2.0, hi=2.0):
    """xdot = -x + u on an interval (test system with a closed-form flow)."""
    return ControlAffineSystem(
        "linear1d-test", 1, 1,
        lambda x: -np.asarray(x, dtype=float),
        lambda x: np.ones(np.shape(x) + (1,)),
        Box(np.array([lo]), np.array([hi])),
    )


def integrator1d_test(lo=-2.0, hi=2.0):
    """xdot = u on an interval."""
    return ControlAffineSystem(
        "integrator1d-test", 1, 1,
        lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        lambda x: np.ones(np.shape(x) + (1,)),
        Box(np.array([lo]), np.array([hi])),
    )


PRESETS = {
    "dubins": dubins_car,
    "linear1d-test": linear1d_test,
    "integrator1d-test": integrator1d_test,
}


def make_system(name, **kwargs):
    try:
        return PRESETS[name](**kwargs)
    except KeyError:
        raise ValueError(f"unknown system preset {name!r}; choose from {sorted(PRESETS)}") from None


def _rk4(sys, x, u, dt):
    k1 = sys.rhs(x, u)
    k2 = sys.rhs(x + 0.5 * dt * k1, u)
    k3 = sys.rhs(x + 0.5 * dt * k2, u)
    k4 = sys.rhs(x + dt * k3, u)
    return sys.wrap(x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))


def integrate_step(sys, x, u, dt):
    """One classical Runge-Kutta step of xdot = f(x) + g(x) u.

    Works on a single state or a batch (states on the last axis).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    if u is None:
        u = np.zeros(sys.input_dim)
    y = _rk4(sys, x, np.asarray(u, dtype=float), dt)
    if not np.all(np.isfinite(y)):
        raise IntegrationError("non-finite state after integration step")
    return y


def input_vector(label, m):
    """Constant input for a snapshot label: 'zero' or 'e<i>' (1-based)."""
    u = np.zeros(m)
    if label == "zero":
        return u
    if isinstance(label, str) and label.startswith("e") and label[1:].isdigit():
        i = int(label[1:])
        if 1 <= i <= m:
            u[i - 1] = 1.0
            return u
    raise ValueError(f"bad input label {label!r} for {m} inputs")


@dataclass
class SnapshotDataset:
    X: np.ndarray
    Y: np.ndarray
    dt: float
    input_label: str
    seed: int | None = None
    sampling: str = "uniform"

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
        if self.X.shape != self.Y.shape or len(self.X) < 1:
            raise ValueError("X and Y must hold the same nonzero number of states")

    @property
    def M(self):
        return len(self.X)

    def metadata(self):
        return {"dt": self.dt, "input_label": self.input_label, "seed": self.seed,
                "M": self.M, "sampling": self.sampling}

    def save(self, path):
        """CSV with header x1..xn,y1..yn plus a JSON sidecar ``<path>.json``."""
        path = Path(path)
        n = self.X.shape[1]
        header = ",".join([f"x{i + 1}" for i in range(n)] + [f"y{i + 1}" for i in range(n)])
        np.savetxt(path, np.hstack([self.X, self.Y]), delimiter=",", header=header,
                   comments="", fmt="%.17g")
        Path(str(path) + ".json").write_text(json.dumps(self.metadata(), indent=2))

    @classmethod
    def load(cls, path):
        path = Path(path)
        meta = json.loads(Path(str(path) + ".json").read_text())
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        n = data.shape[1] // 2
        return cls(data[:, :n], data[:, n:], meta["dt"], meta["input_label"],
                   meta.get("seed"), meta.get("sampling", "uniform"))


def _draw(box, count, rng, sampling):
    if sampling == "uniform":
        return box.lo + (box.hi - box.lo) * rng.random((count, box.dim))
    if sampling == "sobol":
        from scipy.stats import qmc

        # scrambled Sobol points seeded from the same generator
        eng = qmc.Sobol(box.dim, scramble=True, seed=rng)
        with warnings.catch_warnings():
            # counts need not be powers of two here
            warnings.simplefilter("ignore", UserWarning)
            pts = eng.random(count)
        return qmc.scale(pts, box.lo, box.hi)
    raise ValueError(f"unknown sampling scheme {sampling!r}")


def generate_snapshots(sys, input_label, M, dt, seed, sampling="uniform", max_rounds=50):
    """Sample M initial states over the domain and advance each by one step.

    Pairs whose successor leaves the domain are discarded and redrawn.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = input_vector(input_label, sys.input_dim)
    rng = np.random.default_rng(seed)
    xs, ys, have = [], [], 0
    for _ in range(max_rounds):
        need = M - have
        # oversample a little so one round normally suffices
        X = _draw(sys.domain, need + need // 10 + 8, rng, sampling)
        Y = integrate_step(sys, X, u, dt)
        ok = sys.in_domain(Y)
        xs.append(X[ok][:need])
        ys.append(Y[ok][:need])
        have += len(xs[-1])
        if have == M:
            return SnapshotDataset(np.vstack(xs), np.vstack(ys), dt, input_label, seed, sampling)
    raise GenerationError(f"collected only {have} of {M} in-domain pairs after {max_rounds} rounds")


@dataclass
class Trajectory:
    t: np.ndarray
    X: np.ndarray
    U: np.ndarray
    status: str  # stopped | exited | timeout | failed

    def save_csv(self, path):
        n, m = self.X.shape[1], self.U.shape[1]
        header = ",".join(["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(m)])
        np.savetxt(path, np.column_stack([self.t, self.X, self.U]), delimiter=",",
                   header=header, comments="", fmt="%.17g")


def simulate_batch(sys, controller, X0, dt, t_max, stop_set=None, on_step=None):
    """Closed-loop RK4 simulation of many initial states at once.

    ``controller`` maps a (k, n) batch to (k, m) inputs and ``stop_set`` maps
    a batch to a boolean mask.  Each run stops on entering the stop set,
    leaving the domain or reaching ``t_max``.  Returns one Trajectory per
    initial state (a run starting in the stop set has a single sample at
    t = 0); ``U[k]`` is the input applied from ``X[k]`` (the last row
    repeats the final input).  Runs whose input becomes non-finite get status
    ``failed``.
    """
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    if not np.all(sys.in_domain(X0)):
        raise ValueError("initial states must lie in the domain")
    n_run = len(X0)
    steps = int(round(t_max / dt))
    states = [X0.copy()]
    inputs = []
    alive = np.ones(n_run, dtype=bool)
    length = np.full(n_run, steps)
    status = np.array(["timeout"] * n_run, dtype=object)
    if stop_set is not None:
        # runs that start inside the stop set finish at t = 0
        done = np.asarray(stop_set(X0), dtype=bool)
        status[done] = "stopped"
        length[done] = 0
        alive &= ~done
    x = X0.copy()
    for k in range(steps):
        if not alive.any():
            break
        u = np.zeros((n_run, sys.input_dim))
        if alive.any():
            u[alive] = controller(x[alive])
        bad = alive & ~np.all(np.isfinite(u), axis=1)
        if bad.any():
            status[bad] = "failed"
            length[bad] = k
            alive &= ~bad
            u[bad] = np.nan
        inputs.append(u)
        xn = x.copy()
        if alive.any():
            xn[alive] = _rk4(sys, x[alive], u[alive], dt)
        states.append(xn)
        if on_step is not None:
            on_step(k, x, u, alive)
        if alive.any():
            stop = alive & (stop_set(xn) if stop_set is not None else False)
            out = alive & ~stop & ~sys.in_domain(xn)
            status[stop] = "stopped"
            status[out] = "exited"
            length[stop | out] = k + 1
            alive &= ~(stop | out)
        x = xn
        if not alive.any():
            break
    S = np.stack(states, axis=1)
    Ui = np.stack(inputs, axis=1) if inputs else np.zeros((n_run, 0, sys.input_dim))
    out = []
    for i in range(n_run):
        ln = length[i]
        Xi = S[i, : ln + 1]
        Ui_i = Ui[i, :ln]
        last = Ui_i[-1:] if ln > 0 else np.zeros((1, sys.input_dim))
        out.append(Trajectory(dt * np.arange(ln + 1), Xi, np.vstack([Ui_i, last]), status[i]))
    return out


def simulate_closed_loop(sys, controller, x0, dt, t_max, stop_set=None):
    """Single-run closed-loop simulation.

    ``controller`` maps a state (n,) to an input (m,).  Raises
    SimulationError, carrying the partial trajectory, when the controller
    returns a non-finite input.
    """
    def batch_ctl(X):
        return np.vstack([np.asarray(controller(x), dtype=float).reshape(-1) for x in X])

    batch_stop = None
    if stop_set is not None:
        batch_stop = lambda X: np.array([bool(stop_set(x)) for x in X])  # noqa: E731
    traj = simulate_batch(sys, batch_ctl, np.asarray(x0, dtype=float)[None], dt, t_max, batch_stop)[0]
    if traj.status == "failed":
        raise SimulationError("controller returned a non-finite input", traj)
    return traj
