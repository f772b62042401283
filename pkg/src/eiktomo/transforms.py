"""Radon and fanbeam transforms, their discrete adjoints, rebinning and FBP filters.

Both forward transforms integrate bilinear samples of the image along chord
segments with the composite trapezoid rule (step at most ``h/2``). The
adjoints scatter with exactly the same sample points and weights, so they are
algebraic transposes with respect to the inner products

* image:    ``<a, b> = h^2 * sum(a * b)``
* parallel: ``<p, q> = (pi / n_angles) * dt * sum(p * q)``
* fanbeam:  ``<p, q> = (2 pi / m) * (2 pi / n) * sum(p * q)``
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.interpolate import CubicSpline

from .grid import AcquisitionGeometry, Grid2D, ScalarField2D

__all__ = [
    "ParallelSinogram",
    "FanbeamSinogram",
    "FilterSpec",
    "radon",
    "radon_adjoint",
    "fanbeam",
    "fanbeam_adjoint",
    "rebin_fan_to_parallel",
    "filter_symbol",
    "apply_filter",
    "fbp_parallel",
    "fbp_fanbeam",
    "image_inner",
]

FILTER_KINDS = ("ramp", "hilbert_derivative", "scaling_S")
NORMALIZATIONS = ("paper_literal", "calibrated")


@dataclass(frozen=True, eq=False)
class ParallelSinogram:
    """Line integrals indexed by normal angle in ``[0, pi)`` and signed offset."""

    data: np.ndarray
    radius: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        d = np.array(self.data, dtype=float)
        if d.ndim != 2 or d.shape[1] < 2:
            raise ValueError("parallel sinogram must be n_angles x n_offsets")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @property
    def n_angles(self) -> int:
        return self.data.shape[0]

    @property
    def n_offsets(self) -> int:
        return self.data.shape[1]

    @property
    def angles(self) -> np.ndarray:
        return np.pi * np.arange(self.n_angles) / self.n_angles

    @property
    def offsets(self) -> np.ndarray:
        return np.linspace(-self.radius, self.radius, self.n_offsets)

    @property
    def dt(self) -> float:
        return 2.0 * self.radius / (self.n_offsets - 1)

    def weight(self) -> float:
        return (np.pi / self.n_angles) * self.dt

    def with_data(self, data) -> "ParallelSinogram":
        return ParallelSinogram(data, self.radius, dict(self.meta))


@dataclass(frozen=True, eq=False)
class FanbeamSinogram:
    """Line integrals along source-to-receiver chords, rows are sources."""

    geometry: AcquisitionGeometry
    data: np.ndarray

    def __post_init__(self):
        d = np.array(self.data, dtype=float)
        expected = (self.geometry.n_sources, self.geometry.n_receivers)
        if d.shape != expected:
            raise ValueError(f"fanbeam data shape {d.shape} does not match geometry {expected}")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    def weight(self) -> float:
        g = self.geometry
        return (2 * np.pi / g.n_sources) * (2 * np.pi / g.n_receivers)

    def fan_angles(self) -> np.ndarray:
        """Angle of each ray from the source's central ray, in ``(-pi/2, pi/2)``."""
        g = self.geometry
        delta = np.mod(g.receiver_angles[None, :] - g.source_angles[:, None], 2 * np.pi)
        return 0.5 * delta - 0.5 * np.pi

    def with_data(self, data) -> "FanbeamSinogram":
        return FanbeamSinogram(self.geometry, data)


@dataclass(frozen=True)
class FilterSpec:
    kind: str = "ramp"
    c: float | None = None
    normalization: str = "calibrated"

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise ValueError(f"unknown filter kind {self.kind!r}; expected one of {FILTER_KINDS}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if self.c is not None and self.c < 0:
            raise ValueError("regularisation parameter c must be non-negative")
        if (self.kind == "scaling_S" and self.normalization == "paper_literal"
                and self.c is not None and self.c <= 0):
            raise ValueError("paper_literal scaling filter needs c > 0")


def image_inner(a: ScalarField2D, b: ScalarField2D) -> float:
    return a.grid.cell_area() * float(np.sum(a.values * b.values))


# ---------------------------------------------------------------------------
# ray kernels


@numba.njit(cache=True, nogil=True)
def _gather(img, ox, oy, h, px, py, qx, qy, out):
    ny, nx = img.shape
    step = 0.5 * h
    for r in range(px.shape[0]):
        dx = qx[r] - px[r]
        dy = qy[r] - py[r]
        length = math.sqrt(dx * dx + dy * dy)
        if length == 0.0:
            out[r] = 0.0
            continue
        n = max(1, int(math.ceil(length / step)))
        ds = length / n
        acc = 0.0
        for s in range(n + 1):
            w = ds if 0 < s < n else 0.5 * ds
            t = s / n
            fx = (px[r] + t * dx - ox) / h
            fy = (py[r] + t * dy - oy) / h
            i = int(math.floor(fx))
            j = int(math.floor(fy))
            tx = fx - i
            ty = fy - j
            for cj in range(2):
                jj = j + cj
                if jj < 0 or jj >= ny:
                    continue
                wy = ty if cj == 1 else 1.0 - ty
                for ci in range(2):
                    ii = i + ci
                    if ii < 0 or ii >= nx:
                        continue
                    wx = tx if ci == 1 else 1.0 - tx
                    acc += w * wx * wy * img[jj, ii]
        out[r] = acc


@numba.njit(cache=True, nogil=True)
def _scatter(vals, ox, oy, h, px, py, qx, qy, img):
    ny, nx = img.shape
    step = 0.5 * h
    for r in range(px.shape[0]):
        v = vals[r]
        if v == 0.0:
            continue
        dx = qx[r] - px[r]
        dy = qy[r] - py[r]
        length = math.sqrt(dx * dx + dy * dy)
        if length == 0.0:
            continue
        n = max(1, int(math.ceil(length / step)))
        ds = length / n
        for s in range(n + 1):
            w = ds if 0 < s < n else 0.5 * ds
            t = s / n
            fx = (px[r] + t * dx - ox) / h
            fy = (py[r] + t * dy - oy) / h
            i = int(math.floor(fx))
            j = int(math.floor(fy))
            tx = fx - i
            ty = fy - j
            for cj in range(2):
                jj = j + cj
                if jj < 0 or jj >= ny:
                    continue
                wy = ty if cj == 1 else 1.0 - ty
                for ci in range(2):
                    ii = i + ci
                    if ii < 0 or ii >= nx:
                        continue
                    wx = tx if ci == 1 else 1.0 - tx
                    img[jj, ii] += w * wx * wy * v


def _parallel_rays(n_angles, n_offsets, radius):
    phi = np.pi * np.arange(n_angles) / n_angles
    t = np.linspace(-radius, radius, n_offsets)
    P, T = np.meshgrid(phi, t, indexing="ij")
    half = np.sqrt(np.maximum(radius * radius - T * T, 0.0))
    ax, ay = np.cos(P), np.sin(P)
    cx, cy = T * ax, T * ay
    # endpoints of the chord {x . alpha = t} inside the disc
    px, py = cx + half * ay, cy - half * ax
    qx, qy = cx - half * ay, cy + half * ax
    return [np.ascontiguousarray(a.ravel()) for a in (px, py, qx, qy)]


def _fan_rays(geometry):
    s = geometry.sources
    r = geometry.receivers
    m, n = geometry.n_sources, geometry.n_receivers
    px = np.repeat(s[:, 0], n)
    py = np.repeat(s[:, 1], n)
    qx = np.tile(r[:, 0], m)
    qy = np.tile(r[:, 1], m)
    return [np.ascontiguousarray(a) for a in (px, py, qx, qy)]


def radon(f: ScalarField2D, n_angles: int, n_offsets: int, radius: float) -> ParallelSinogram:
    """Parallel-beam line integrals over chords of the disc of radius `radius`."""
    g = f.grid
    rays = _parallel_rays(n_angles, n_offsets, radius)
    out = np.empty(n_angles * n_offsets)
    _gather(np.ascontiguousarray(f.values), g.origin[0], g.origin[1], g.h, *rays, out)
    return ParallelSinogram(out.reshape(n_angles, n_offsets), radius)


def radon_adjoint(p: ParallelSinogram, grid: Grid2D) -> ScalarField2D:
    """Transpose of :func:`radon` under the image and parallel inner products."""
    rays = _parallel_rays(p.n_angles, p.n_offsets, p.radius)
    img = np.zeros(grid.shape)
    vals = np.ascontiguousarray(p.data.ravel()) * (p.weight() / grid.cell_area())
    _scatter(vals, grid.origin[0], grid.origin[1], grid.h, *rays, img)
    return ScalarField2D(grid, img)


def fanbeam(f: ScalarField2D, geometry: AcquisitionGeometry) -> FanbeamSinogram:
    """Line integrals of `f` along every source-receiver chord."""
    g = f.grid
    rays = _fan_rays(geometry)
    out = np.empty(geometry.n_sources * geometry.n_receivers)
    _gather(np.ascontiguousarray(f.values), g.origin[0], g.origin[1], g.h, *rays, out)
    return FanbeamSinogram(geometry, out.reshape(geometry.n_sources, geometry.n_receivers))


def fanbeam_adjoint(p: FanbeamSinogram, grid: Grid2D) -> ScalarField2D:
    """Transpose of :func:`fanbeam` under the image and fanbeam inner products."""
    rays = _fan_rays(p.geometry)
    img = np.zeros(grid.shape)
    vals = np.ascontiguousarray(p.data.ravel()) * (p.weight() / grid.cell_area())
    _scatter(vals, grid.origin[0], grid.origin[1], grid.h, *rays, img)
    return ScalarField2D(grid, img)


# ---------------------------------------------------------------------------
# rebinning


def rebin_fan_to_parallel(p: FanbeamSinogram, n_angles: int = 180,
                          n_offsets: int | None = None) -> ParallelSinogram:
    """Resample fan data onto the parallel ``(phi, t)`` grid.

    A fan ray with source angle ``beta`` and fan angle ``gamma`` is the line
    with normal angle ``phi = beta + gamma - pi/2`` and offset
    ``t = R sin(gamma)``. Each source row is first resampled in ``gamma`` by a
    cubic spline (endpoints ``gamma = +-pi/2`` are grazing rays of zero
    length), then every offset column is interpolated across sources by a
    periodic cubic spline in ``beta``. Since ``(phi, t)`` and
    ``(phi + pi, -t)`` are the same line, both fan representations are
    evaluated and averaged.
    """
    g = p.geometry
    R = g.radius
    if n_offsets is None:
        n_offsets = g.n_receivers
    t = np.linspace(-R, R, n_offsets)
    gam_t = np.arcsin(np.clip(t / R, -1.0, 1.0))
    fan = p.fan_angles()
    # resample each source row on the common gamma grid
    G = np.empty((g.n_sources, n_offsets))
    for k in range(g.n_sources):
        order = np.argsort(fan[k])
        gk = np.concatenate([[-0.5 * np.pi], fan[k][order], [0.5 * np.pi]])
        vk = np.concatenate([[0.0], p.data[k][order], [0.0]])
        G[k] = CubicSpline(gk, vk)(gam_t)
    beta = g.source_angles
    phi = np.pi * np.arange(n_angles) / n_angles
    out = np.zeros((n_angles, n_offsets))
    if g.n_sources == 1:
        for b in range(n_offsets):
            out[:, b] = G[0, b]
    else:
        b_ext = np.concatenate([beta, [beta[0] + 2 * np.pi]])
        for b in range(n_offsets):
            spl = CubicSpline(b_ext, np.concatenate([G[:, b], [G[0, b]]]), bc_type="periodic")
            br = n_offsets - 1 - b  # index of -t on the symmetric offset grid
            spl_r = CubicSpline(b_ext, np.concatenate([G[:, br], [G[0, br]]]),
                                bc_type="periodic")
            beta1 = phi - gam_t[b] + 0.5 * np.pi
            beta2 = phi + np.pi - gam_t[br] + 0.5 * np.pi
            out[:, b] = 0.5 * (spl(_wrap(beta1, beta[0])) + spl_r(_wrap(beta2, beta[0])))
    meta = {"sparse_receivers": bool(n_offsets > g.n_receivers)}
    if meta["sparse_receivers"]:
        warnings.warn(f"{n_offsets} offsets requested from only {g.n_receivers} receivers",
                      RuntimeWarning, stacklevel=2)
    return ParallelSinogram(out, R, meta)


def _wrap(a, start):
    return start + np.mod(a - start, 2 * np.pi)


# ---------------------------------------------------------------------------
# filters


def default_c(dt: float) -> float:
    """Regularisation parameter placing the scaling-filter peak at half Nyquist."""
    return (2 * np.pi / (4.0 * dt)) ** 2


def filter_symbol(spec: FilterSpec, nu: np.ndarray, dt: float) -> np.ndarray:
    """Frequency response at ordinary frequencies `nu` (kernel ``exp(-2 pi i nu t)``)."""
    w = np.abs(2 * np.pi * nu)
    if spec.kind in ("ramp", "hilbert_derivative"):
        # H d/dt and (-d^2/dt^2)^(1/2) have the same symbol
        return w / (4 * np.pi)
    c = default_c(dt) if spec.c is None else spec.c
    if spec.normalization == "paper_literal":
        return w / (c + w * w)
    if c == 0:
        return np.zeros_like(w)
    return w / (4 * np.pi) * c / (c + w * w)


def padded_length(n: int) -> int:
    return 1 << int(math.ceil(math.log2(2 * n)))


def filter_periodic(rows: np.ndarray, dt: float, symbol) -> np.ndarray:
    """Multiply each row's DFT by ``symbol(nu)``; rows are treated as periodic."""
    N = rows.shape[-1]
    nu = np.fft.fftfreq(N, d=dt)
    return np.real(np.fft.ifft(np.fft.fft(rows, axis=-1) * symbol(nu), axis=-1))


def apply_filter(p: ParallelSinogram, spec: FilterSpec) -> ParallelSinogram:
    """Filter every angle's profile along ``t`` after zero padding to >= 2x length."""
    n = p.n_offsets
    if n < 8:
        raise ValueError("filtering needs at least 8 offsets")
    N = padded_length(n)
    padded = np.zeros((p.n_angles, N))
    padded[:, :n] = p.data
    dt = p.dt
    out = filter_periodic(padded, dt, lambda nu: filter_symbol(spec, nu, dt))
    return p.with_data(out[:, :n])


def fbp_parallel(p: ParallelSinogram, grid: Grid2D, spec: FilterSpec = FilterSpec()) -> ScalarField2D:
    """Filtered back projection of a parallel sinogram onto `grid`.

    The stored angles cover ``[0, pi)``; the factor 2 restores the full-circle
    back projection using ``Rf(phi + pi, -t) = Rf(phi, t)``.
    """
    q = apply_filter(p, spec)
    return radon_adjoint(q, grid) * 2.0


def fbp_fanbeam(p: FanbeamSinogram, grid: Grid2D, spec: FilterSpec = FilterSpec(),
                n_angles: int = 180, n_offsets: int | None = None) -> ScalarField2D:
    """Fanbeam FBP by rebinning to parallel geometry then :func:`fbp_parallel`."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        par = rebin_fan_to_parallel(p, n_angles, n_offsets)
    return fbp_parallel(par, grid, spec)
