"""Uniform Cartesian grids, fields on them, and the circular acquisition geometry.

Field values are stored as ``(ny, nx)`` arrays, so ``values[j, i]`` is the
node at ``origin + (i*h, j*h)`` and a C-order flatten is row-major with x
running fastest.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate1d

__all__ = [
    "Grid2D",
    "ScalarField2D",
    "VectorField2D",
    "AcquisitionGeometry",
    "gradient",
    "normalize_direction",
    "gaussian_smooth",
    "sample_bilinear",
    "sample_bilinear_many",
    "disk_mask",
    "DEGENERATE_FLOOR",
]

DEGENERATE_FLOOR = 1e-10


@dataclass(frozen=True)
class Grid2D:
    nx: int
    ny: int
    h: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ValueError(f"grid needs at least 3 nodes per axis, got {self.nx}x{self.ny}")
        if not self.h > 0:
            raise ValueError(f"grid spacing must be positive, got {self.h}")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @classmethod
    def centered(cls, extent: float, h: float) -> "Grid2D":
        """Square grid covering ``[-extent, extent]^2`` with spacing `h`."""
        n = int(round(2.0 * extent / h)) + 1
        return cls(n, n, h, (-extent, -extent))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def x(self) -> np.ndarray:
        return self.origin[0] + np.arange(self.nx) * self.h

    @property
    def y(self) -> np.ndarray:
        return self.origin[1] + np.arange(self.ny) * self.h

    @property
    def xmax(self) -> float:
        return self.origin[0] + (self.nx - 1) * self.h

    @property
    def ymax(self) -> float:
        return self.origin[1] + (self.ny - 1) * self.h

    def node(self, i: int, j: int) -> tuple[float, float]:
        return (self.origin[0] + i * self.h, self.origin[1] + j * self.h)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinate arrays ``(X, Y)``, each of shape ``(ny, nx)``."""
        return np.meshgrid(self.x, self.y)

    def contains(self, x: float, y: float) -> bool:
        eps = 1e-12 * self.h
        return (self.origin[0] - eps <= x <= self.xmax + eps
                and self.origin[1] - eps <= y <= self.ymax + eps)

    def cell_area(self) -> float:
        return self.h * self.h


@dataclass(frozen=True, eq=False)
class ScalarField2D:
    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v.reshape(self.grid.shape)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, grid: Grid2D, value: float) -> "ScalarField2D":
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def from_function(cls, grid: Grid2D, func) -> "ScalarField2D":
        X, Y = grid.mesh()
        return cls(grid, np.broadcast_to(func(X, Y), grid.shape))

    def with_values(self, values) -> "ScalarField2D":
        return ScalarField2D(self.grid, values)

    def __add__(self, other):
        o = other.values if isinstance(other, ScalarField2D) else other
        return self.with_values(self.values + o)

    def __sub__(self, other):
        o = other.values if isinstance(other, ScalarField2D) else other
        return self.with_values(self.values - o)

    def __mul__(self, scalar):
        return self.with_values(self.values * scalar)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class VectorField2D:
    grid: Grid2D
    vx: np.ndarray
    vy: np.ndarray
    # nodes where a direction could not be defined (see normalize_direction)
    degenerate: np.ndarray | None = field(default=None)

    def __post_init__(self):
        for name in ("vx", "vy"):
            v = np.asarray(getattr(self, name), dtype=float).reshape(self.grid.shape).copy()
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be finite")
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        if self.degenerate is not None:
            d = np.asarray(self.degenerate, dtype=bool).reshape(self.grid.shape).copy()
            d.setflags(write=False)
            object.__setattr__(self, "degenerate", d)

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.vx, self.vy)


@dataclass(frozen=True)
class AcquisitionGeometry:
    """Sources and receivers equally spaced on the circle of radius `radius`.

    Receivers start at angle `receiver_start`; sources start at
    `source_start`, which defaults to half a source spacing (pi/m) so that no
    source sits on a receiver in the standard configurations.
    """

    radius: float
    n_sources: int
    n_receivers: int
    source_start: float | None = None
    receiver_start: float = 0.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.n_sources < 1 or self.n_receivers < 1:
            raise ValueError("need at least one source and one receiver")
        if self.source_start is None:
            object.__setattr__(self, "source_start", math.pi / self.n_sources)

    @property
    def source_angles(self) -> np.ndarray:
        return self.source_start + 2.0 * np.pi * np.arange(self.n_sources) / self.n_sources

    @property
    def receiver_angles(self) -> np.ndarray:
        return self.receiver_start + 2.0 * np.pi * np.arange(self.n_receivers) / self.n_receivers

    @property
    def sources(self) -> np.ndarray:
        b = self.source_angles
        return self.radius * np.column_stack([np.cos(b), np.sin(b)])

    @property
    def receivers(self) -> np.ndarray:
        a = self.receiver_angles
        return self.radius * np.column_stack([np.cos(a), np.sin(a)])


def gradient(field: ScalarField2D) -> VectorField2D:
    """Central differences inside, second-order one-sided differences on the edges."""
    h = field.grid.h
    gy, gx = np.gradient(field.values, h, edge_order=2)
    return VectorField2D(field.grid, gx, gy)


def normalize_direction(v: VectorField2D, floor: float = DEGENERATE_FLOOR) -> VectorField2D:
    """Map each node to ``v/|v|``; nodes with ``|v| < floor`` become zero and are flagged."""
    if not floor > 0:
        raise ValueError("floor must be positive")
    mag = v.magnitude()
    degenerate = mag < floor
    safe = np.where(degenerate, 1.0, mag)
    vx = np.where(degenerate, 0.0, v.vx / safe)
    vy = np.where(degenerate, 0.0, v.vy / safe)
    return VectorField2D(v.grid, vx, vy, degenerate)


def gaussian_kernel(sigma: float, h: float) -> np.ndarray:
    """Sampled 1-D Gaussian of width `sigma`, radius ``ceil(3 sigma / h)``, unit sum."""
    r = int(math.ceil(3.0 * sigma / h))
    k = np.exp(-0.5 * (np.arange(-r, r + 1) * h / sigma) ** 2)
    return k / k.sum()


def _smooth_array(a: np.ndarray, sigma: float, h: float) -> np.ndarray:
    k = gaussian_kernel(sigma, h)
    # half-sample reflection makes the 1-D operator symmetric and row-stochastic,
    # so constants are reproduced and the total mass is conserved
    out = correlate1d(a, k, axis=0, mode="reflect")
    return correlate1d(out, k, axis=1, mode="reflect")


def gaussian_smooth(obj, sigma: float):
    """Separable Gaussian smoothing of a scalar or vector field.

    ``sigma`` is a length (same units as the grid spacing); ``sigma = 0``
    returns the input unchanged.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return obj
    h = obj.grid.h
    if isinstance(obj, VectorField2D):
        return VectorField2D(obj.grid, _smooth_array(obj.vx, sigma, h),
                             _smooth_array(obj.vy, sigma, h), obj.degenerate)
    return ScalarField2D(obj.grid, _smooth_array(obj.values, sigma, h))


def sample_bilinear(field: ScalarField2D, point) -> float:
    """Bilinear interpolation of `field` at one point inside the grid box."""
    x, y = float(point[0]), float(point[1])
    g = field.grid
    if not g.contains(x, y):
        raise ValueError(f"point ({x}, {y}) lies outside the grid "
                         f"[{g.origin[0]}, {g.xmax}] x [{g.origin[1]}, {g.ymax}]")
    return float(sample_bilinear_many(field, np.array([[x, y]]))[0])


def sample_bilinear_many(field: ScalarField2D, points: np.ndarray) -> np.ndarray:
    """Vectorised bilinear interpolation; every point must lie inside the grid box."""
    g = field.grid
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    fx = (pts[:, 0] - g.origin[0]) / g.h
    fy = (pts[:, 1] - g.origin[1]) / g.h
    eps = 1e-9
    bad = (fx < -eps) | (fx > g.nx - 1 + eps) | (fy < -eps) | (fy > g.ny - 1 + eps)
    if np.any(bad):
        p = pts[np.argmax(bad)]
        raise ValueError(f"point ({p[0]}, {p[1]}) lies outside the grid")
    fx = np.clip(fx, 0.0, g.nx - 1)
    fy = np.clip(fy, 0.0, g.ny - 1)
    i = np.minimum(np.floor(fx).astype(int), g.nx - 2)
    j = np.minimum(np.floor(fy).astype(int), g.ny - 2)
    tx = fx - i
    ty = fy - j
    v = field.values
    return ((1 - tx) * (1 - ty) * v[j, i] + tx * (1 - ty) * v[j, i + 1]
            + (1 - tx) * ty * v[j + 1, i] + tx * ty * v[j + 1, i + 1])


def disk_mask(grid: Grid2D, radius: float) -> np.ndarray:
    """Boolean ``(ny, nx)`` mask of nodes with ``|node| <= radius``."""
    X, Y = grid.mesh()
    return np.hypot(X, Y) <= radius + 1e-12 * grid.h
