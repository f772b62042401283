import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eiktomo.grid import (AcquisitionGeometry, Grid2D, ScalarField2D, VectorField2D, disk_mask,
                          gaussian_kernel, gaussian_smooth, gradient, normalize_direction,
                          sample_bilinear, sample_bilinear_many)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid2D(2, 5, 0.1)
    with pytest.raises(ValueError):
        Grid2D(5, 5, 0.0)


def test_node_positions_exact():
    g = Grid2D(11, 7, 0.25, (-1.0, 2.0))
    assert g.node(3, 4) == (-1.0 + 3 * 0.25, 2.0 + 4 * 0.25)
    assert g.shape == (7, 11)
    X, Y = g.mesh()
    assert X[4, 3] == g.node(3, 4)[0] and Y[4, 3] == g.node(3, 4)[1]


def test_scalar_field_rejects_bad_values():
    g = Grid2D(4, 4, 1.0)
    with pytest.raises(ValueError):
        ScalarField2D(g, np.zeros((3, 4)))
    vals = np.zeros((4, 4))
    vals[1, 1] = np.nan
    with pytest.raises(ValueError):
        ScalarField2D(g, vals)


def test_gradient_affine_and_constant():
    g = Grid2D(9, 6, 0.3, (0.1, -0.4))
    gx = gradient(ScalarField2D.from_function(g, lambda x, y: x))
    assert np.allclose(gx.vx, 1.0, atol=1e-12) and np.allclose(gx.vy, 0.0, atol=1e-12)
    g0 = gradient(ScalarField2D.constant(g, 3.7))
    assert np.allclose(g0.vx, 0, atol=1e-14) and np.allclose(g0.vy, 0, atol=1e-14)


def test_gradient_quadratic_oracle():
    # d/dx (x^2 + y^2) = 2x: central differences are exact for quadratics
    g = Grid2D(101, 101, 0.02, (-1.0, -1.0))
    gr = gradient(ScalarField2D.from_function(g, lambda x, y: x * x + y * y))
    i, j = 65, 70  # node (0.3, 0.4)
    assert np.allclose(g.node(i, j), (0.3, 0.4))
    assert abs(gr.vx[j, i] - 0.6) < 1e-12 and abs(gr.vy[j, i] - 0.8) < 1e-12
    # second-order one-sided stencils are exact on the edges too
    assert np.allclose(gr.vx[:, 0], -2.0, atol=1e-10)


def test_gradient_linear(rng):
    g = Grid2D(12, 10, 0.1)
    a, b = rng.normal(size=g.shape), rng.normal(size=g.shape)
    lhs = gradient(ScalarField2D(g, 2.5 * a - 0.7 * b))
    ga, gb = gradient(ScalarField2D(g, a)), gradient(ScalarField2D(g, b))
    assert np.allclose(lhs.vx, 2.5 * ga.vx - 0.7 * gb.vx, rtol=0, atol=1e-12)
    assert np.allclose(lhs.vy, 2.5 * ga.vy - 0.7 * gb.vy, rtol=0, atol=1e-12)


def test_normalize_direction():
    g = Grid2D(3, 3, 1.0)
    vx = np.zeros(g.shape)
    vy = np.zeros(g.shape)
    vx[1, 1], vy[1, 1] = 3.0, 4.0
    n = normalize_direction(VectorField2D(g, vx, vy), floor=1e-8)
    assert (n.vx[1, 1], n.vy[1, 1]) == pytest.approx((0.6, 0.8))
    assert n.vx[0, 0] == 0 and n.vy[0, 0] == 0 and n.degenerate[0, 0]
    assert not n.degenerate[1, 1]
    mags = n.magnitude()
    assert np.all(np.isclose(mags, 1.0) | (mags == 0))


def test_radial_unit_field():
    # the direction error of central differences on |x - x0| is O((h/r)^2)
    x0 = (-1.5, -0.2)
    g = Grid2D(41, 41, 1e-3, (0.0, 0.0))
    ubar = ScalarField2D.from_function(g, lambda x, y: np.hypot(x - x0[0], y - x0[1]))
    d = normalize_direction(gradient(ubar))
    X, Y = g.mesh()
    r = np.hypot(X - x0[0], Y - x0[1])
    assert np.max(np.abs(d.vx - (X - x0[0]) / r)) < 1e-6
    assert np.max(np.abs(d.vy - (Y - x0[1]) / r)) < 1e-6


def test_radial_unit_field_near_source():
    g = Grid2D.centered(0.5, 0.01)
    x0 = (0.013, -0.2)
    ubar = ScalarField2D.from_function(g, lambda x, y: np.hypot(x - x0[0], y - x0[1]))
    d = normalize_direction(gradient(ubar))
    X, Y = g.mesh()
    r = np.hypot(X - x0[0], Y - x0[1])
    inner = (r > 0.05) & (np.abs(X) < 0.49) & (np.abs(Y) < 0.49)
    err = np.hypot(d.vx - (X - x0[0]) / r, d.vy - (Y - x0[1]) / r)
    assert np.max((err * (r / g.h) ** 2)[inner]) < 0.5


def test_gaussian_smooth_identity_and_constant():
    g = Grid2D(20, 15, 0.05)
    f = ScalarField2D.from_function(g, lambda x, y: np.sin(3 * x) + y)
    assert gaussian_smooth(f, 0.0) is f
    c = gaussian_smooth(ScalarField2D.constant(g, 2.5), 0.13)
    assert np.allclose(c.values, 2.5, rtol=0, atol=1e-14)
    with pytest.raises(ValueError):
        gaussian_smooth(f, -1.0)


def test_gaussian_smooth_delta_matches_2d_kernel():
    h = 0.1
    g = Grid2D(41, 41, h)
    vals = np.zeros(g.shape)
    vals[20, 20] = 1.0
    out = gaussian_smooth(ScalarField2D(g, vals), 2 * h).values
    r = int(math.ceil(3 * 2 * h / h))
    # explicit 2-D sum of the truncated Gaussian, normalised to unit mass
    expl = np.zeros(g.shape)
    for dj in range(-r, r + 1):
        for di in range(-r, r + 1):
            expl[20 + dj, 20 + di] = math.exp(-0.5 * ((di * h) ** 2 + (dj * h) ** 2) / (2 * h) ** 2)
    expl /= sum(math.exp(-0.5 * (k * h) ** 2 / (2 * h) ** 2) for k in range(-r, r + 1)) ** 2
    assert np.max(np.abs(out - expl)) < 1e-12


def test_gaussian_kernel_unit_sum():
    k = gaussian_kernel(0.03, 0.01)
    assert len(k) == 2 * 9 + 1 and abs(k.sum() - 1) < 1e-15


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 0.3), st.integers(0, 2 ** 32 - 1))
def test_gaussian_smooth_preserves_mean(sigma, seed):
    g = Grid2D(23, 17, 0.05)
    f = ScalarField2D(g, np.random.default_rng(seed).normal(size=g.shape))
    assert abs(gaussian_smooth(f, sigma).values.mean() - f.values.mean()) < 1e-10


def test_bilinear_nodes_and_corner_formula():
    g = Grid2D(3, 3, 0.5)
    f = ScalarField2D.from_function(g, lambda x, y: x * y)
    X, Y = g.mesh()
    pts = np.column_stack([X.ravel(), Y.ravel()])
    assert np.array_equal(sample_bilinear_many(f, pts), f.values.ravel())
    # (0.25, 0.75) sits in the cell [0, 0.5] x [0.5, 1] with weights 1/2 each
    corners = [0 * 0.5, 0.5 * 0.5, 0 * 1.0, 0.5 * 1.0]
    assert sample_bilinear(f, (0.25, 0.75)) == pytest.approx(0.25 * sum(corners), abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_bilinear_affine_exact(px, py, a, b, c):
    g = Grid2D(21, 21, 0.1, (-1.0, -1.0))
    f = ScalarField2D.from_function(g, lambda x, y: a * x + b * y + c)
    assert sample_bilinear(f, (px, py)) == pytest.approx(a * px + b * py + c, abs=1e-12)


def test_bilinear_outside_names_point():
    g = Grid2D(5, 5, 0.1)
    with pytest.raises(ValueError, match="1.5"):
        sample_bilinear(ScalarField2D.constant(g, 1.0), (1.5, 0.1))


def test_disk_mask():
    g = Grid2D.centered(0.76, 0.01)
    X, Y = g.mesh()
    count = sum(1 for x, y in zip(X.ravel(), Y.ravel()) if math.hypot(x, y) <= 0.75 + 1e-12)
    assert disk_mask(g, 0.75).sum() == count
    assert disk_mask(g, 10.0).all()
    m0 = disk_mask(g, 0.0)
    assert m0.sum() == 1 and m0[g.ny // 2, g.nx // 2]
    assert disk_mask(Grid2D(4, 4, 0.3, (0.1, 0.1)), 0.0).sum() == 0


def test_acquisition_geometry():
    geo = AcquisitionGeometry(0.75, 18, 153)
    assert geo.source_angles[0] == pytest.approx(np.pi / 18)
    assert geo.receiver_angles[0] == 0
    for ang in (geo.source_angles, geo.receiver_angles):
        steps = np.diff(ang)
        assert np.all(steps > 0) and np.allclose(steps, steps[0])
    assert np.allclose(np.hypot(*geo.sources.T), 0.75, rtol=0, atol=1e-15)
    assert np.allclose(np.hypot(*geo.receivers.T), 0.75, rtol=0, atol=1e-15)
    with pytest.raises(ValueError):
        AcquisitionGeometry(0.0, 3, 3)
