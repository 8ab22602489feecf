"""Traversability maps b(x) >= 0, planar regions and Trav(A) measures.

Maps and regions look only at two planar coordinates of the state (the first
two by default), so a heading coordinate never changes b.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class MeasurementError(RuntimeError):
    pass


def _planar(X, dims):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return X[:, list(dims)]


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float
    dims: tuple = (0, 1)

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")

    def contains(self, X):
        # closed set: the boundary belongs to the region
        d2 = ((_planar(X, self.dims) - np.asarray(self.center, dtype=float)) ** 2).sum(axis=1)
        return d2 <= self.radius ** 2 * (1 + 1e-12)

    @property
    def area(self):
        return np.pi * self.radius ** 2

    def bounds(self):
        c = np.asarray(self.center, dtype=float)
        return c - self.radius, c + self.radius

    def inflate(self, eps):
        return Ball(self.center, self.radius + eps, self.dims)


@dataclass(frozen=True)
class Rect:
    lo: tuple
    hi: tuple
    dims: tuple = (0, 1)

    def __post_init__(self):
        if np.any(np.asarray(self.hi, dtype=float) <= np.asarray(self.lo, dtype=float)):
            raise ValueError("empty box region")

    def contains(self, X):
        P = _planar(X, self.dims)
        return np.all((P >= np.asarray(self.lo)) & (P <= np.asarray(self.hi)), axis=1)

    @property
    def area(self):
        return float(np.prod(np.asarray(self.hi, dtype=float) - np.asarray(self.lo, dtype=float)))

    def bounds(self):
        return np.asarray(self.lo, dtype=float), np.asarray(self.hi, dtype=float)

    def inflate(self, eps):
        return Rect(tuple(np.asarray(self.lo) - eps), tuple(np.asarray(self.hi) + eps), self.dims)


@dataclass(frozen=True)
class Union:
    parts: tuple

    def __post_init__(self):
        if not self.parts:
            raise ValueError("empty union")

    @property
    def dims(self):
        return self.parts[0].dims

    def contains(self, X):
        return np.any([p.contains(X) for p in self.parts], axis=0)

    def bounds(self):
        lo = np.min([p.bounds()[0] for p in self.parts], axis=0)
        hi = np.max([p.bounds()[1] for p in self.parts], axis=0)
        return lo, hi

    @property
    def area(self):
        # overlaps are possible, so measure on a fine planar lattice
        lo, hi = self.bounds()
        n = 1000
        axes = [lo[i] + (np.arange(n) + 0.5) * (hi[i] - lo[i]) / n for i in range(2)]
        P = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2)
        X = np.zeros((len(P), max(self.dims) + 1))
        X[:, list(self.dims)] = P
        return float(self.contains(X).mean() * np.prod(hi - lo))

    def inflate(self, eps):
        return Union(tuple(p.inflate(eps) for p in self.parts))


def region_from_dict(spec, dims=(0, 1)):
    """Build a region from {'ball': {...}}, {'box': {...}} or {'union': [...]}."""
    if "ball" in spec:
        b = spec["ball"]
        return Ball(tuple(b["center"]), float(b["radius"]), dims)
    if "box" in spec:
        b = spec["box"]
        return Rect(tuple(b["lo"]), tuple(b["hi"]), dims)
    if "union" in spec:
        return Union(tuple(region_from_dict(s, dims) for s in spec["union"]))
    raise ValueError(f"unknown region spec {spec!r}")


def indicator_vector(region):
    """Characteristic function of a closed region as a 0/1 float field."""
    return lambda X: region.contains(X).astype(float)


@dataclass(frozen=True)
class Hill:
    center: tuple
    height: float
    width: float


@dataclass(frozen=True)
class AnalyticTerrain:
    """base_offset + sum of Gaussian hills over the planar coordinates."""

    hills: tuple = ()
    base_offset: float = 0.05
    planar_dims: tuple = (0, 1)

    def __post_init__(self):
        if self.base_offset < 0 or any(h.height < 0 or h.width <= 0 for h in self.hills):
            raise ValueError("terrain must be nonnegative with positive hill widths")

    def __call__(self, X):
        P = _planar(X, self.planar_dims)
        b = np.full(len(P), float(self.base_offset))
        for h in self.hills:
            r2 = ((P - np.asarray(h.center, dtype=float)) ** 2).sum(axis=1)
            b += h.height * np.exp(-r2 / (2 * h.width ** 2))
        return b


@dataclass(frozen=True)
class RasterTerrain:
    """Bilinear interpolation of samples values[j, i] at (x0 + i dx, y0 + j dy).

    Queries outside the raster extent take the value at the nearest edge.
    """

    x0: float
    y0: float
    dx: float
    dy: float
    values: np.ndarray
    base_offset: float = 0.0
    planar_dims: tuple = (0, 1)

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        if v.shape[0] < 1 or v.shape[1] < 1 or self.dx <= 0 or self.dy <= 0:
            raise ValueError("raster needs positive spacing and at least one sample")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("raster samples must be finite and nonnegative")
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape

    def __call__(self, X):
        P = _planar(X, self.planar_dims)
        ny, nx = self.values.shape
        fx = np.clip((P[:, 0] - self.x0) / self.dx, 0, nx - 1)
        fy = np.clip((P[:, 1] - self.y0) / self.dy, 0, ny - 1)
        i0 = np.minimum(np.floor(fx).astype(int), max(nx - 2, 0))
        j0 = np.minimum(np.floor(fy).astype(int), max(ny - 2, 0))
        i1 = np.minimum(i0 + 1, nx - 1)
        j1 = np.minimum(j0 + 1, ny - 1)
        tx, ty = fx - i0, fy - j0
        v = self.values
        b = ((1 - tx) * (1 - ty) * v[j0, i0] + tx * (1 - ty) * v[j0, i1]
             + (1 - tx) * ty * v[j1, i0] + tx * ty * v[j1, i1])
        return self.base_offset + b


@dataclass(frozen=True)
class BinaryObstacle:
    """b = indicator(X_u) / area(X_u)."""

    region: object
    area: float = field(default=None)

    def __post_init__(self):
        if self.area is None:
            object.__setattr__(self, "area", float(self.region.area))

    @property
    def planar_dims(self):
        return self.region.dims

    def __call__(self, X):
        return self.region.contains(X) / self.area


@dataclass(frozen=True)
class PaddedTerrain:
    """``base`` inside the planar box [lo, hi], base + cost outside it.

    Used when the basis extends past the working box: the extra cost keeps
    the optimiser from routing density through the padding.
    """

    base: object
    lo: tuple
    hi: tuple
    cost: float

    @property
    def planar_dims(self):
        return getattr(self.base, "planar_dims", (0, 1))

    def __call__(self, X):
        P = _planar(X, self.planar_dims)
        out = np.any((P < np.asarray(self.lo)) | (P > np.asarray(self.hi)), axis=1)
        return self.base(X) + self.cost * out


def eval_b(tmap, X):
    """Traversability at one state (scalar) or a batch (vector)."""
    single = np.ndim(X) == 1
    b = tmap(X)
    return float(b[0]) if single else b


def trav_measure(tmap, region, grid):
    """Quadrature of b over the grid nodes that fall in ``region``."""
    mask = region.contains(grid.nodes)
    if not mask.any():
        raise MeasurementError("region contains no quadrature nodes; refine the grid")
    return float(tmap(grid.nodes[mask]) @ grid.weights[mask])


HILLS_A = AnalyticTerrain((Hill((2.0, 6.5), 1.0, 1.0), Hill((6.5, 3.0), 0.8, 1.2),
                           Hill((1.0, 2.5), 0.6, 0.8)), 0.05)
HILLS_B = AnalyticTerrain(tuple(Hill((4.0, -1.5 + 2.0 * k), 0.8, 0.9) for k in range(5)), 0.05)
BUNDLED = {"hills-A": HILLS_A, "hills-B": HILLS_B}


def write_raster(path, x0, y0, dx, dy, values):
    """Text raster: header ``trav-raster v1 x0 y0 dx dy nx ny`` then ny rows."""
    v = np.atleast_2d(np.asarray(values, dtype=float))
    ny, nx = v.shape
    with open(path, "w") as fh:
        fh.write(f"trav-raster v1 {x0!r} {y0!r} {dx!r} {dy!r} {nx} {ny}\n")
        for row in v:
            fh.write(" ".join(repr(float(a)) for a in row) + "\n")


def read_raster(path, normalize=False, base_offset=0.0, planar_dims=(0, 1)):
    """Load a raster file; ``normalize`` rescales samples to [0, 1] (min-max)."""
    lines = Path(path).read_text().split("\n")
    head = lines[0].split()
    if head[:2] != ["trav-raster", "v1"] or len(head) != 8:
        raise ValueError(f"{path}: bad raster header")
    x0, y0, dx, dy = map(float, head[2:6])
    nx, ny = int(head[6]), int(head[7])
    rows = [ln.split() for ln in lines[1:] if ln.strip()]
    v = np.array(rows, dtype=float)
    if v.shape != (ny, nx):
        raise ValueError(f"{path}: expected {ny}x{nx} samples, found {v.shape}")
    if normalize:
        span = v.max() - v.min()
        v = (v - v.min()) / span if span > 0 else np.zeros_like(v)
    return RasterTerrain(x0, y0, dx, dy, v, base_offset, planar_dims)


def rasterize(tmap, x0, y0, dx, dy, nx, ny, state_dim=2, planar_dims=(0, 1)):
    """Sample a map on a planar lattice (rows along the second planar axis)."""
    xs = x0 + dx * np.arange(nx)
    ys = y0 + dy * np.arange(ny)
    gx, gy = np.meshgrid(xs, ys)
    X = np.zeros((gx.size, state_dim))
    X[:, planar_dims[0]] = gx.ravel()
    X[:, planar_dims[1]] = gy.ravel()
    return tmap(X).reshape(ny, nx)


def terrain_from_dict(spec, planar_dims=(0, 1), base_dir="."):
    """Terrain from a config section: bundled name, analytic hills, raster or obstacle."""
    kind = spec.get("kind", "bundled")
    if kind == "bundled":
        return BUNDLED[spec["name"]]
    if kind == "analytic":
        hills = tuple(Hill(tuple(h["center"]), float(h["height"]), float(h["width"]))
                      for h in spec.get("hills", []))
        return AnalyticTerrain(hills, float(spec.get("base_offset", 0.05)), planar_dims)
    if kind == "raster":
        p = Path(spec["path"])
        if not p.is_absolute():
            p = Path(base_dir) / p
        return read_raster(p, bool(spec.get("normalize", False)),
                           float(spec.get("base_offset", 0.0)), planar_dims)
    if kind == "binary-obstacle":
        return BinaryObstacle(region_from_dict(spec["region"], planar_dims))
    raise ValueError(f"unknown terrain kind {kind!r}")
