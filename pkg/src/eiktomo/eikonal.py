"""Point-source Eikonal solver (Godunov fast sweeping) and boundary travel times."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np

from .grid import (AcquisitionGeometry, Grid2D, ScalarField2D, VectorField2D,
                   sample_bilinear, sample_bilinear_many)

__all__ = [
    "EikonalSolution",
    "EikonalSinogram",
    "solve_eikonal",
    "boundary_trace",
    "forward_sinogram",
    "upwind_gradient",
    "chord_sinogram",
    "worker_count",
    "DEFAULT_TOL",
    "DEFAULT_MAX_SWEEPS",
]

DEFAULT_TOL = 1e-9
DEFAULT_MAX_SWEEPS = 100
# radius, in cells, of the exactly initialised and frozen disc around the source
INIT_RADIUS_CELLS = 2.0


class EikonalError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EikonalSolution:
    u: ScalarField2D
    source: tuple[float, float]
    iterations: int
    converged: bool
    frozen: np.ndarray


@dataclass(frozen=True, eq=False)
class EikonalSinogram:
    """Boundary first-arrival times, one row per source, one column per receiver."""

    geometry: AcquisitionGeometry
    data: np.ndarray
    label: str = ""
    converged: tuple | None = None  # per-source solver flags, when produced by a solve

    def __post_init__(self):
        d = np.array(self.data, dtype=float)
        expected = (self.geometry.n_sources, self.geometry.n_receivers)
        if d.shape != expected:
            raise ValueError(f"sinogram shape {d.shape} does not match geometry {expected}")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    def with_data(self, data, label=None) -> "EikonalSinogram":
        return EikonalSinogram(self.geometry, data, self.label if label is None else label,
                               self.converged)


@numba.njit(cache=True, nogil=True)
def _fast_sweep(u, f, frozen, h, tol, max_passes):
    ny, nx = u.shape
    big = 1e300
    passes = 0
    converged = False
    for _ in range(max_passes):
        passes += 1
        maxdiff = 0.0
        for order in range(4):
            for jj in range(ny):
                j = jj if order < 2 else ny - 1 - jj
                for ii in range(nx):
                    i = ii if order % 2 == 0 else nx - 1 - ii
                    if frozen[j, i]:
                        continue
                    if i == 0:
                        a = u[j, 1]
                    elif i == nx - 1:
                        a = u[j, nx - 2]
                    else:
                        a = min(u[j, i - 1], u[j, i + 1])
                    if j == 0:
                        b = u[1, i]
                    elif j == ny - 1:
                        b = u[ny - 2, i]
                    else:
                        b = min(u[j - 1, i], u[j + 1, i])
                    if a >= big and b >= big:
                        continue
                    fh = f[j, i] * h
                    if abs(a - b) >= fh:
                        unew = min(a, b) + fh
                    else:
                        unew = 0.5 * (a + b + math.sqrt(2.0 * fh * fh - (a - b) ** 2))
                    old = u[j, i]
                    if unew < old:
                        u[j, i] = unew
                        diff = old - unew if old < big else big
                        if diff > maxdiff:
                            maxdiff = diff
        if maxdiff < tol:
            converged = True
            break
    return passes, converged


def solve_eikonal(f: ScalarField2D, source, tol: float = DEFAULT_TOL,
                  max_sweeps: int = DEFAULT_MAX_SWEEPS) -> EikonalSolution:
    """Viscosity solution of ``|grad u| = f`` with ``u(source) = 0``.

    Nodes within two cells of the source are set to ``f(source) * |x - source|``
    and held fixed; the rest of the grid is relaxed with Godunov-upwind
    Gauss-Seidel sweeps in the four diagonal orderings. One pass is four
    sweeps. A solution that has not met `tol` after `max_sweeps` passes is
    returned with ``converged=False``.
    """
    grid = f.grid
    if np.min(f.values) <= 0:
        raise EikonalError("slowness must be strictly positive everywhere")
    x0, y0 = float(source[0]), float(source[1])
    if not grid.contains(x0, y0):
        raise EikonalError(f"source ({x0}, {y0}) lies outside the grid")
    f0 = sample_bilinear(f, (x0, y0))
    X, Y = grid.mesh()
    r = np.hypot(X - x0, Y - y0)
    frozen = r <= INIT_RADIUS_CELLS * grid.h * (1 + 1e-12)
    u = np.full(grid.shape, 1e300)
    u[frozen] = f0 * r[frozen]
    passes, converged = _fast_sweep(u, np.ascontiguousarray(f.values), frozen,
                                    grid.h, tol, max_sweeps)
    return EikonalSolution(ScalarField2D(grid, u), (x0, y0), int(passes), bool(converged), frozen)


def upwind_gradient(u: ScalarField2D) -> VectorField2D:
    """Gradient of a travel-time field using the Godunov upwind one-sided differences.

    Along each axis the difference is taken towards the smaller neighbour and
    clipped at zero, which is the gradient the fast-sweeping update solves for:
    at converged nodes its magnitude equals the slowness.
    """
    v = u.values
    h = u.grid.h

    def axis_component(w):
        # w has the differentiated axis last
        left = np.empty_like(w)
        right = np.empty_like(w)
        left[..., 1:] = w[..., :-1]
        left[..., 0] = np.inf
        right[..., :-1] = w[..., 1:]
        right[..., -1] = np.inf
        use_left = left <= right
        nb = np.where(use_left, left, right)
        slope = np.maximum((w - nb) / h, 0.0)
        return np.where(use_left, slope, -slope)

    gx = axis_component(v)
    gy = axis_component(v.T).T
    return VectorField2D(u.grid, gx, gy)


def boundary_trace(sol: EikonalSolution, geometry: AcquisitionGeometry) -> np.ndarray:
    """Travel times at the receiver positions (bilinear in the solved field)."""
    return sample_bilinear_many(sol.u, geometry.receivers)


def worker_count() -> int:
    """Parallelism cap from ``EIK_THREADS`` (0 or unset means one per CPU)."""
    try:
        n = int(os.environ.get("EIK_THREADS", "0"))
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def forward_sinogram(f: ScalarField2D, geometry: AcquisitionGeometry,
                     tol: float = DEFAULT_TOL, max_sweeps: int = DEFAULT_MAX_SWEEPS,
                     label: str = "", workers: int | None = None) -> EikonalSinogram:
    """Solve one Eikonal problem per source and stack the receiver traces."""
    sources = geometry.sources

    def row(k):
        sol = solve_eikonal(f, sources[k], tol, max_sweeps)
        return boundary_trace(sol, geometry), sol.converged

    workers = worker_count() if workers is None else workers
    if workers > 1 and geometry.n_sources > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(row, range(geometry.n_sources)))
    else:
        rows = [row(k) for k in range(geometry.n_sources)]
    return EikonalSinogram(geometry, np.vstack([r for r, _ in rows]), label,
                           tuple(c for _, c in rows))


def chord_sinogram(geometry: AcquisitionGeometry, slowness: float = 1.0) -> EikonalSinogram:
    """Exact travel times ``slowness * |receiver - source|`` in a homogeneous medium."""
    s = geometry.sources
    r = geometry.receivers
    d = np.hypot(r[None, :, 0] - s[:, None, 0], r[None, :, 1] - s[:, None, 1])
    return EikonalSinogram(geometry, slowness * d, "homogeneous")
