"""Error norms and peak-localisation checks between grids."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grid import ScalarField2D

__all__ = ["l2_norm", "linf_norm", "relative_l2", "box_mask", "local_maxima",
           "top_maxima", "match_targets", "LocalizationReport", "localization",
           "ring_contrast"]

# perturbations and targets live in this square
OMEGA2 = (-0.5, 0.5, -0.5, 0.5)


def l2_norm(a: ScalarField2D, mask=None) -> float:
    """Discrete L2 norm ``sqrt(h^2 sum a^2)`` over `mask` (all nodes by default)."""
    v = a.values if mask is None else a.values[mask]
    return float(np.sqrt(a.grid.cell_area() * np.sum(v * v)))


def linf_norm(a: ScalarField2D, mask=None) -> float:
    v = a.values if mask is None else a.values[mask]
    return float(np.max(np.abs(v))) if v.size else 0.0


def relative_l2(approx: ScalarField2D, exact: ScalarField2D, mask=None) -> float:
    ref = l2_norm(exact, mask)
    if ref == 0:
        raise ValueError("reference field has zero norm")
    return l2_norm(approx - exact, mask) / ref


def box_mask(grid, bounds=OMEGA2) -> np.ndarray:
    x0, x1, y0, y1 = bounds
    X, Y = grid.mesh()
    tol = 1e-9 * grid.h
    return (X >= x0 - tol) & (X <= x1 + tol) & (Y >= y0 - tol) & (Y <= y1 + tol)


def _disk_footprint(radius, h):
    r = max(1, int(np.floor(radius / h + 1e-9)))
    i = np.arange(-r, r + 1)
    return (i[:, None] ** 2 + i[None, :] ** 2) <= (radius / h) ** 2 + 1e-9


def local_maxima(field: ScalarField2D, mask=None, radius: float = 0.05,
                 baseline: float = 0.0, threshold: float = 0.5) -> list[tuple[float, float, float]]:
    """Strict-neighbourhood maxima of ``field - baseline`` inside `mask`.

    A node qualifies when it is the largest value within a disc of `radius`
    and exceeds ``threshold * peak`` (skipped for ``threshold=-inf``) where ``peak`` is the largest value of
    ``field - baseline`` inside the mask. Plateaus count once (at their
    centroid node). Returns ``(x, y, value)`` sorted by decreasing value.
    """
    grid = field.grid
    mask = np.ones(grid.shape, bool) if mask is None else np.asarray(mask, bool)
    v = np.where(mask, field.values - baseline, -np.inf)
    if not mask.any():
        return []
    fp = _disk_footprint(radius, grid.h)
    is_max = (v == ndimage.maximum_filter(v, footprint=fp, mode="constant", cval=-np.inf))
    is_max &= mask
    if np.isfinite(threshold):
        peak = v[mask].max()
        if peak <= 0:
            return []
        is_max &= v > threshold * peak
    labels, n = ndimage.label(is_max, structure=np.ones((3, 3)))
    out = []
    X, Y = grid.mesh()
    for lab in range(1, n + 1):
        jj, ii = np.nonzero(labels == lab)
        # plateau: node nearest the centroid
        cj, ci = jj.mean(), ii.mean()
        k = np.argmin((jj - cj) ** 2 + (ii - ci) ** 2)
        j, i = jj[k], ii[k]
        out.append((float(X[j, i]), float(Y[j, i]), float(v[j, i])))
    out.sort(key=lambda t: -t[2])
    return out


def top_maxima(field: ScalarField2D, k: int, mask=None, radius: float = 0.15,
               baseline: float = 0.0) -> list[tuple[float, float, float]]:
    """The `k` largest local maxima (suppression `radius`), with no amplitude threshold."""
    peaks = local_maxima(field, mask, radius, baseline, threshold=-np.inf)
    return peaks[:k]


def match_targets(points, targets, tol: float) -> tuple[int, list[float]]:
    """Greedy nearest matching of points to targets; returns (#matched within tol, distances).

    ``distances[j]`` is the distance from target `j` to its matched point, or
    ``inf`` when no point is left.
    """
    pts = [tuple(p[:2]) for p in points]
    free = list(range(len(pts)))
    pairs = sorted(((np.hypot(pts[a][0] - t[0], pts[a][1] - t[1]), a, j)
                    for a in range(len(pts)) for j, t in enumerate(targets)))
    got = {}
    for d, a, j in pairs:
        if a in free and j not in got:
            got[j] = d
            free.remove(a)
    dist = [float(got.get(j, np.inf)) for j in range(len(targets))]
    return sum(d <= tol for d in dist), dist


@dataclass
class LocalizationReport:
    maxima: list
    distances: list
    matched: int
    n_targets: int
    tol: float

    @property
    def passed(self) -> bool:
        return len(self.maxima) == self.n_targets and self.matched == self.n_targets


def localization(field: ScalarField2D, targets, tol: float, *, mode: str = "threshold",
                 baseline: float = 0.0, mask=None, radius: float | None = None) -> LocalizationReport:
    """Peak localisation check.

    ``mode="threshold"``: all maxima above half the peak (radius 0.05 by
    default) must be exactly the targets. ``mode="top"``: the ``len(targets)``
    strongest maxima (radius 0.15 by default) must match the targets.
    """
    mask = box_mask(field.grid) if mask is None else mask
    if mode == "threshold":
        peaks = local_maxima(field, mask, 0.05 if radius is None else radius, baseline)
    elif mode == "top":
        peaks = top_maxima(field, len(targets), mask, 0.15 if radius is None else radius, baseline)
    else:
        raise ValueError(f"unknown localization mode {mode!r}")
    matched, dist = match_targets(peaks, targets, tol)
    return LocalizationReport(peaks, dist, matched, len(targets), tol)


def ring_contrast(field: ScalarField2D, outer: float = 0.6, inner: float = 0.5,
                  core: float = 0.2) -> float:
    """Mean over the square annulus between sides `outer` and `inner` minus the
    mean over the central square ``[-core, core]^2``."""
    X, Y = field.grid.mesh()
    tol = 1e-9 * field.grid.h
    cheb = np.maximum(np.abs(X), np.abs(Y))
    ring = (cheb <= 0.5 * outer + tol) & (cheb > 0.5 * inner + tol)
    centre = cheb <= core + tol
    return float(field.values[ring].mean() - field.values[centre].mean())
