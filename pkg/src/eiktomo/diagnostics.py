"""Linearisation-gap diagnostics: the p1 field and its ray-integrated balance."""
from __future__ import annotations

import numpy as np

from .eikonal import (DEFAULT_MAX_SWEEPS, DEFAULT_TOL, EikonalSolution, boundary_trace,
                      solve_eikonal, upwind_gradient)
from .grid import AcquisitionGeometry, ScalarField2D, sample_bilinear
from .transforms import FanbeamSinogram, fanbeam

__all__ = ["p1_field", "p1_l1_check", "fan_angle_integral", "homogeneous_solution"]


def _projected_slope(sol: EikonalSolution, f0: float) -> np.ndarray:
    """``d . grad u`` with the upwind gradient, analytic inside the frozen disc."""
    grid = sol.u.grid
    x0, y0 = sol.source
    X, Y = grid.mesh()
    dx, dy = X - x0, Y - y0
    r = np.hypot(dx, dy)
    at_source = r < 1e-12
    safe = np.where(at_source, 1.0, r)
    g = upwind_gradient(sol.u)
    slope = (dx * g.vx + dy * g.vy) / safe
    slope = np.where(sol.frozen, f0, slope)
    slope[at_source] = f0
    return slope


def homogeneous_solution(grid, source, tol: float = DEFAULT_TOL,
                         max_sweeps: int = DEFAULT_MAX_SWEEPS) -> EikonalSolution:
    """Travel times for unit slowness computed by the same solver."""
    return solve_eikonal(ScalarField2D.constant(grid, 1.0), source, tol, max_sweeps)


def p1_field(u: EikonalSolution, f: ScalarField2D,
             background: EikonalSolution | None = None) -> ScalarField2D:
    """``f - 1 + d . (grad ubar - grad u)`` for the radial direction ``d`` of the source.

    Both gradients are the Godunov upwind differences of fast-sweeping
    solutions, ``ubar`` being the unit-slowness solution on the same grid (pass
    `background` to reuse one). Using the discrete ``ubar`` cancels the
    first-order solver error common to both fields. Since ``|grad u| = f`` at
    converged nodes the field is non-negative up to the small discrete value
    of ``1 - d . grad ubar``. Inside the frozen disc the analytic slopes are
    used, so the source node carries 0 when ``f`` is locally constant.
    """
    if u.u.grid != f.grid:
        raise ValueError("travel time and slowness must share a grid")
    if background is None:
        background = homogeneous_solution(f.grid, u.source)
    elif background.u.grid != f.grid or not np.allclose(background.source, u.source):
        raise ValueError("background solution must share grid and source")
    f0 = sample_bilinear(f, u.source)
    p1 = f.values - 1.0 + _projected_slope(background, 1.0) - _projected_slope(u, f0)
    return ScalarField2D(f.grid, p1)


def fan_angle_integral(row: np.ndarray, fan_angles: np.ndarray) -> float:
    """Trapezoid integral over the fan angle, closing with zeros at +-pi/2."""
    order = np.argsort(fan_angles)
    x = np.concatenate([[-0.5 * np.pi], fan_angles[order], [0.5 * np.pi]])
    y = np.concatenate([[0.0], row[order], [0.0]])
    return float(np.trapezoid(y, x))


def p1_l1_check(f: ScalarField2D, geometry: AcquisitionGeometry,
                solutions: list[EikonalSolution],
                backgrounds: list[EikonalSolution] | None = None) -> tuple[float, float]:
    """Both sides of the ray balance for ``p1``, summed over sources.

    Integrating ``d . grad(u - ubar) = f - 1 - p1`` along each straight ray
    from the source gives, per ray, ``int p1 = int (f - 1) - (u - ubar)`` at the
    receiver. Returns ``(lhs, rhs)`` where ``lhs`` integrates the fanbeam
    transform of the ``p1`` field over fan angle and ``rhs`` integrates
    ``fanbeam(f - 1) - (u - ubar)|receivers`` the same way. ``ubar`` is the
    discrete unit-slowness solution; `backgrounds` may supply them per source.
    """
    if len(solutions) != geometry.n_sources:
        raise ValueError("need one solution per source")
    if backgrounds is None:
        backgrounds = [homogeneous_solution(f.grid, s.source) for s in solutions]
    fan = FanbeamSinogram(geometry, np.zeros((geometry.n_sources, geometry.n_receivers)))
    gam = fan.fan_angles()
    line_f = fanbeam(f - 1.0, geometry).data
    lhs = rhs = 0.0
    for k, sol in enumerate(solutions):
        p1 = p1_field(sol, f, backgrounds[k])
        line_p1 = fanbeam(p1, geometry).data[k]
        ub = boundary_trace(backgrounds[k], geometry)
        trace = boundary_trace(sol, geometry)
        lhs += fan_angle_integral(line_p1, gam[k])
        rhs += fan_angle_integral(line_f[k] - (trace - ub), gam[k])
    return lhs, rhs
