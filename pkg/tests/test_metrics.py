import numpy as np

from eiktomo.grid import Grid2D, ScalarField2D
from eiktomo.phantoms import Box, PhantomSpec, build_phantom, preset
from eiktomo.metrics import (box_mask, l2_norm, linf_norm, local_maxima, localization,
                             match_targets, relative_l2, ring_contrast, top_maxima)


def _bumps(grid, centres, amp=1.0, w=0.03):
    return ScalarField2D.from_function(grid, lambda x, y: sum(
        amp * np.exp(-((x - a) ** 2 + (y - b) ** 2) / (2 * w * w)) for a, b in centres))


def test_norms():
    g = Grid2D(11, 11, 0.1)
    f = ScalarField2D.constant(g, 2.0)
    assert l2_norm(f) == np.sqrt(0.01 * 121 * 4)
    assert linf_norm(f * -3.0) == 6.0
    assert abs(relative_l2(f * 1.1, f) - 0.1) < 1e-12


def test_local_maxima_and_threshold(grid01):
    centres = [(-0.2, 0.2), (0.3, -0.1)]
    f = _bumps(grid01, centres) + _bumps(grid01, [(0.0, 0.0)], amp=0.3)
    peaks = local_maxima(f, box_mask(grid01))
    assert len(peaks) == 2
    assert match_targets(peaks, centres, 1e-9)[0] == 2
    assert len(top_maxima(f, 3, box_mask(grid01))) == 3


def test_plateau_counts_once():
    g = Grid2D.centered(0.6, 0.01)
    f = build_phantom(PhantomSpec(1.0, (Box((0.1, 0.0), 0.1, 0.1, 1.5),)), g)
    peaks = local_maxima(f, box_mask(g), baseline=1.0)
    assert len(peaks) == 1 and np.allclose(peaks[0][:2], (0.1, 0.0))


def test_match_targets_greedy():
    n, d = match_targets([(0, 0), (1, 1)], [(0.05, 0), (1, 1.2), (5, 5)], 0.1)
    assert n == 1 and d[2] == np.inf and abs(d[1] - 0.2) < 1e-12


def test_localization_report(grid01):
    centres = [(-0.25, -0.25), (0.2, 0.0)]
    f = _bumps(grid01, centres)
    rep = localization(f, centres, 0.02, mode="top")
    assert rep.passed and max(rep.distances) < 1e-12
    rep = localization(f, centres + [(0.4, 0.4)], 0.02)
    assert not rep.passed


def test_ring_contrast(grid01):
    f = build_phantom(preset("ring"), grid01)
    assert abs(ring_contrast(f) - 0.05) < 1e-12
