"""Gaussian RBF dictionaries, midpoint quadrature and density projection."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import nnls

from .dynamics import Box, wrap_angle


class ConfigurationError(ValueError):
    pass


class ProjectionError(RuntimeError):
    pass


_CHUNK = 4096


@dataclass(frozen=True)
class RbfDictionary:
    """N Gaussian bumps exp(-|x - c_k|^2 / (2 sigma^2)) sharing one width.

    Coordinates listed in ``periodic_dims`` use the wrapped angular
    difference, which keeps the dictionary smooth across the angle seam.
    """

    centers: np.ndarray
    sigma: float
    grid_spacing: float
    domain: Box
    periodic_dims: tuple = ()

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=float))
        object.__setattr__(self, "centers", c)
        if self.sigma <= 0:
            raise ConfigurationError("sigma must be positive")

    @property
    def size(self):
        return len(self.centers)

    @property
    def dim(self):
        return self.centers.shape[1]

    def _diff(self, X):
        D = X[:, None, :] - self.centers[None, :, :]
        if self.periodic_dims:
            idx = list(self.periodic_dims)
            D[..., idx] = wrap_angle(D[..., idx])
        return D

    def __call__(self, X):
        return eval_basis(self, X)

    def to_dict(self):
        return {"centers": self.centers.tolist(), "sigma": self.sigma,
                "grid_spacing": self.grid_spacing, "domain": self.domain.to_dict(),
                "periodic_dims": list(self.periodic_dims)}

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["centers"]), float(d["sigma"]), float(d["grid_spacing"]),
                   Box(np.array(d["domain"]["lo"]), np.array(d["domain"]["hi"])),
                   tuple(d.get("periodic_dims", ())))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def build_grid_dictionary(domain, counts_per_axis, sigma_ratio, periodic_dims=()):
    """Lattice of centres over ``domain`` with sigma = sigma_ratio * d / 3.

    Ordinary axes place ``count`` centres on both end points; periodic axes
    place them at lo + k (hi - lo) / count so the seam is not doubled.  The
    spacing d is that of the finest axis and must satisfy d <= 3 sigma <= 1.5 d.

    Examples
    --------
    >>> from densnav.dynamics import Box
    >>> D = build_grid_dictionary(Box([0, 0], [1, 1]), (2, 2), 1.2)
    >>> D.size, round(D.sigma, 12)
    (4, 0.4)
    """
    counts = [int(c) for c in counts_per_axis]
    if len(counts) != domain.dim:
        raise ConfigurationError("one centre count per state axis is required")
    axes, spacing = [], []
    for i, cnt in enumerate(counts):
        lo, hi = domain.lo[i], domain.hi[i]
        if i in periodic_dims:
            if cnt < 1:
                raise ConfigurationError("periodic axes need at least one centre")
            step = (hi - lo) / cnt
            axes.append(lo + step * np.arange(cnt))
        else:
            if cnt < 2:
                raise ConfigurationError("each axis needs at least 2 centres")
            step = (hi - lo) / (cnt - 1)
            axes.append(np.linspace(lo, hi, cnt))
        spacing.append(step)
    # a periodic axis with a single centre is constant along that axis
    active = [s for i, s in enumerate(spacing) if not (i in periodic_dims and counts[i] == 1)]
    d = min(active)
    sigma = sigma_ratio * d / 3.0
    if not (d <= 3 * sigma * (1 + 1e-12) and 3 * sigma <= 1.5 * d * (1 + 1e-12)):
        raise ConfigurationError(
            f"spacing rule d <= 3 sigma <= 1.5 d violated (sigma={sigma:.4g}, d={d:.4g})")
    centers = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.dim)
    return RbfDictionary(centers, sigma, d, domain, tuple(periodic_dims))


def eval_basis(dictionary, X):
    """Evaluate Psi at one state (returns (N,)) or a batch (returns (k, N))."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    out = np.empty((len(X), dictionary.size))
    s2 = 2.0 * dictionary.sigma ** 2
    # keep the (chunk, N, n) difference tensor bounded
    step = max(1, _CHUNK * 64 // max(dictionary.size, 1))
    for i in range(0, len(X), step):
        D = dictionary._diff(X[i:i + step])
        out[i:i + step] = np.exp(-np.einsum("kni,kni->kn", D, D) / s2)
    return out[0] if single else out


@dataclass(frozen=True)
class QuadratureGrid:
    nodes: np.ndarray
    weights: np.ndarray
    excluded_region: str = ""

    @property
    def size(self):
        return len(self.nodes)

    @property
    def total_weight(self):
        return float(self.weights.sum())


def build_quadrature(domain, counts, exclude=None, excluded_region=""):
    """Midpoint rule on a uniform grid, dropping nodes where ``exclude`` holds.

    ``exclude`` maps a (k, n) array of nodes to a boolean mask.
    """
    counts = [int(c) for c in counts]
    if len(counts) != domain.dim or min(counts) < 1:
        raise ConfigurationError("need a positive node count per axis")
    axes = [domain.lo[i] + (np.arange(c) + 0.5) * (domain.hi[i] - domain.lo[i]) / c
            for i, c in enumerate(counts)]
    nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.dim)
    w = domain.volume / np.prod(counts)
    if exclude is not None:
        nodes = nodes[~np.asarray(exclude(nodes), dtype=bool)]
    if len(nodes) == 0:
        raise ConfigurationError("quadrature grid is empty after exclusion")
    return QuadratureGrid(nodes, np.full(len(nodes), w), excluded_region)


def quadrature_for(dictionary, nodes_per_spacing=3, exclude=None, excluded_region=""):
    """Grid with at least ``nodes_per_spacing`` nodes per centre spacing per axis."""
    dom = dictionary.domain
    counts = np.ceil(nodes_per_spacing * (dom.hi - dom.lo) / dictionary.grid_spacing).astype(int)
    return build_quadrature(dom, counts, exclude, excluded_region)


def _node_values(weight, grid):
    if callable(weight):
        vals = np.asarray(weight(grid.nodes), dtype=float)
    else:
        vals = np.asarray(weight, dtype=float)
    vals = np.broadcast_to(vals, (grid.size,))
    if not np.all(np.isfinite(vals)):
        raise ValueError("weight is not finite on every quadrature node")
    return vals


def weighted_integral(dictionary, grid, weight):
    """Quadrature of weight(x) Psi(x) over the grid, one entry per basis function.

    ``weight`` is a callable on node batches, a scalar or an array of node
    values.
    """
    vals = _node_values(weight, grid) * grid.weights
    out = np.zeros(dictionary.size)
    for i in range(0, grid.size, _CHUNK):
        out += eval_basis(dictionary, grid.nodes[i:i + _CHUNK]).T @ vals[i:i + _CHUNK]
    return out


def gram_matrix(dictionary, grid):
    """Quadrature Gram matrix sum_q w_q Psi(x_q) Psi(x_q)^T."""
    G = np.zeros((dictionary.size, dictionary.size))
    for i in range(0, grid.size, _CHUNK):
        P = eval_basis(dictionary, grid.nodes[i:i + _CHUNK])
        G += (P * grid.weights[i:i + _CHUNK, None]).T @ P
    return G


@dataclass
class BasisCoefficients:
    values: np.ndarray
    represents: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("coefficients must be finite")

    def save_csv(self, path):
        np.savetxt(path, self.values, header=self.represents, fmt="%.17g")

    @classmethod
    def load_csv(cls, path):
        path = Path(path)
        first = path.read_text().split("\n", 1)[0]
        label = first[1:].strip() if first.startswith("#") else ""
        return cls(np.loadtxt(path, ndmin=1), label)


def project_density(dictionary, grid, h, reg=None, method="tikhonov", max_cond=1e14):
    """Coefficients m with Psi^T m close to h in the quadrature L2 sense.

    ``tikhonov`` solves the regularised normal equations with
    lambda = 1e-8 trace(Gram) / N unless ``reg`` is given.  ``nonneg`` solves
    the same least-squares problem under m >= 0, which keeps the projected
    initial density nonnegative everywhere.
    """
    hv = _node_values(h, grid)
    if np.any(hv < 0):
        raise ValueError("density values must be nonnegative")
    if method == "nonneg":
        sw = np.sqrt(grid.weights)
        P = eval_basis(dictionary, grid.nodes)
        m, _ = nnls(P * sw[:, None], hv * sw, maxiter=50 * dictionary.size)
        return BasisCoefficients(m, "h0")
    if method != "tikhonov":
        raise ValueError(f"unknown projection method {method!r}")
    G = gram_matrix(dictionary, grid)
    b = weighted_integral(dictionary, grid, hv)
    lam = 1e-8 * np.trace(G) / dictionary.size if reg is None else float(reg)
    K = G + lam * np.eye(dictionary.size)
    cond = np.linalg.cond(K)
    if not np.isfinite(cond) or cond > max_cond:
        raise ProjectionError(f"projection Gram matrix too ill-conditioned (cond ~ {cond:.3g})")
    return BasisCoefficients(np.linalg.solve(K, b), "h0")


def truncated_gaussian(center, radius, dims=(0, 1)):
    """Gaussian bump of width radius/2 on the planar dims, zero beyond ``radius``."""
    c = np.asarray(center, dtype=float)
    s = radius / 2.0
    dims = list(dims)

    def h(X):
        r2 = ((np.atleast_2d(X)[:, dims] - c) ** 2).sum(axis=1)
        return np.where(r2 <= radius ** 2, np.exp(-r2 / (2 * s * s)), 0.0)

    return h


def normalized_on(h, grid):
    """Scale ``h`` to unit mass under the grid's quadrature."""
    mass = float(_node_values(h, grid) @ grid.weights)
    if mass <= 0:
        raise ValueError("density has no mass on the quadrature grid")
    return lambda X: h(X) / mass
