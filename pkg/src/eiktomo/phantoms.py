"""Slowness models for the numerical experiments and the measurement noise model."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .eikonal import EikonalSinogram
from .grid import Grid2D, ScalarField2D

__all__ = ["Box", "PhantomSpec", "build_phantom", "preset", "PRESETS", "add_noise",
           "load_phantom_spec", "SUPPORT_HALF_WIDTH"]

# slowness perturbations live in [-0.5, 0.5]^2
SUPPORT_HALF_WIDTH = 0.5


@dataclass(frozen=True)
class Box:
    center: tuple[float, float]
    width: float
    height: float
    value: float
    add: bool = False  # add `value` to what is underneath instead of overwriting

    def contains(self, X, Y, tol):
        return ((np.abs(X - self.center[0]) <= 0.5 * self.width + tol)
                & (np.abs(Y - self.center[1]) <= 0.5 * self.height + tol))


@dataclass(frozen=True)
class GaussianBump:
    """``base + amplitude * exp(-|x - center|^2 / (2 width^2))``."""

    base: float = 1.0
    amplitude: float = 0.2
    width: float = 0.3
    center: tuple[float, float] = (0.0, 0.0)

    def __call__(self, X, Y):
        r2 = (X - self.center[0]) ** 2 + (Y - self.center[1]) ** 2
        return self.base + self.amplitude * np.exp(-0.5 * r2 / self.width ** 2)


@dataclass(frozen=True)
class PhantomSpec:
    background: object = 1.0
    boxes: tuple[Box, ...] = field(default_factory=tuple)
    name: str = "custom"


def build_phantom(spec: PhantomSpec, grid: Grid2D) -> ScalarField2D:
    """Paint `spec` onto `grid`; boxes are closed and later boxes win."""
    half = SUPPORT_HALF_WIDTH
    if grid.origin[0] > -half or grid.origin[1] > -half or grid.xmax < half or grid.ymax < half:
        raise ValueError("grid must cover the support square [-0.5, 0.5]^2")
    X, Y = grid.mesh()
    bg = spec.background
    if isinstance(bg, ScalarField2D):
        if bg.grid != grid:
            raise ValueError("background field lives on a different grid")
        values = bg.values.copy()
    elif callable(bg):
        values = np.broadcast_to(np.asarray(bg(X, Y), dtype=float), grid.shape).copy()
    else:
        values = np.full(grid.shape, float(bg))
    tol = 1e-9 * grid.h
    for box in spec.boxes:
        inside = box.contains(X, Y, tol)
        if box.add:
            values[inside] += box.value
        else:
            values[inside] = box.value
    if values.min() < 1.0 - 1e-12:
        raise ValueError(f"phantom {spec.name!r} has slowness {values.min():.4g} < 1")
    return ScalarField2D(grid, values)


def _example1(f0=1.5):
    return PhantomSpec(1.0, (Box((0.0, 0.0), 1.0, 1.0, f0),), f"example1(f0={f0})")


def _example2():
    # the two contrasts are not given numerically; the right inclusion is the stronger one
    return PhantomSpec(1.0, (Box((-0.20, -0.20), 0.2, 0.2, 1.3),
                             Box((0.20, -0.10), 0.2, 0.2, 1.5)), "example2")


FOUR_CENTERS = ((-0.25, -0.25), (0.30, -0.35), (0.25, 0.35), (-0.20, 0.20))


def _example3():
    return PhantomSpec(1.0, tuple(Box(c, 0.1, 0.1, 1.5) for c in FOUR_CENTERS), "example3")


def _ring():
    return PhantomSpec(1.0, (Box((0.0, 0.0), 0.6, 0.6, 1.05),
                             Box((0.0, 0.0), 0.5, 0.5, 1.0)), "ring")


EXAMPLE6_BOX = Box((-0.125, -0.025), 0.65, 0.45, 1.1)
EXAMPLE6_TARGETS = ((0.20, 0.0), (-0.25, -0.25))


def _example6_background():
    return PhantomSpec(1.0, (EXAMPLE6_BOX,), "example6_background")


def _example6_truth():
    return PhantomSpec(1.0, (EXAMPLE6_BOX,
                             Box(EXAMPLE6_TARGETS[0], 0.1, 0.1, 1.05),
                             Box(EXAMPLE6_TARGETS[1], 0.1, 0.1, 1.15)), "example6_truth")


# stand-in for a background only shown as a figure: smooth radial bump
EXAMPLE7_BUMP = GaussianBump(1.0, 0.2, 0.3)
EXAMPLE7_TARGETS = ((0.25, 0.20), (-0.20, -0.25))


def _example7_background():
    return PhantomSpec(EXAMPLE7_BUMP, (), "example7_background")


def _example7_truth():
    return PhantomSpec(EXAMPLE7_BUMP, tuple(Box(c, 0.1, 0.1, 0.1, add=True)
                                            for c in EXAMPLE7_TARGETS), "example7_truth")


PRESETS = {
    "homogeneous": lambda: PhantomSpec(1.0, (), "homogeneous"),
    "example1": _example1,
    "example2": _example2,
    "example3": _example3,
    "example4": _example3,
    "ring": _ring,
    "example5": _ring,
    "example6_truth": _example6_truth,
    "example6_background": _example6_background,
    "example7_truth": _example7_truth,
    "example7_background": _example7_background,
}


def preset(name: str, **kwargs) -> PhantomSpec:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown phantom {name!r}; available: {', '.join(sorted(PRESETS))}") from None
    return factory(**kwargs)


def load_phantom_spec(path) -> PhantomSpec:
    """Read a phantom description from JSON.

    ``{"background": 1.0 | {"gaussian": {...}}, "boxes": [{"center": [x, y],
    "width": w, "height": h, "value": v, "add": false}, ...]}``
    """
    raw = json.loads(Path(path).read_text())
    bg = raw.get("background", 1.0)
    if isinstance(bg, dict):
        gauss = dict(bg["gaussian"])
        if "center" in gauss:
            gauss["center"] = tuple(gauss["center"])
        bg = GaussianBump(**gauss)
    boxes = tuple(Box(tuple(b["center"]), float(b["width"]), float(b["height"]),
                      float(b["value"]), bool(b.get("add", False)))
                  for b in raw.get("boxes", []))
    return PhantomSpec(bg, boxes, raw.get("name", Path(path).stem))


def add_noise(p: EikonalSinogram, level: float, seed: int = 0,
              per_source: bool = True, reference: np.ndarray | None = None) -> EikonalSinogram:
    """Additive Gaussian noise scaled by the noise level and the data maximum.

    Entry ``(k, j)`` receives ``level * M_k * xi`` with ``xi`` standard normal
    and ``M_k`` the maximum of row `k` (or of the whole sinogram when
    ``per_source`` is false). ``M_k`` is taken from ``|reference|`` instead of
    the data when given, e.g. the residual against a background sinogram.
    """
    if level < 0:
        raise ValueError("noise level must be non-negative")
    if level == 0:
        return p
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal(p.data.shape)
    ref = p.data if reference is None else np.abs(np.asarray(reference, dtype=float))
    if ref.shape != p.data.shape:
        raise ValueError("noise reference must match the sinogram shape")
    scale = ref.max(axis=1, keepdims=True) if per_source else ref.max()
    return p.with_data(p.data + level * scale * xi, f"{p.label} noise={level} seed={seed}".strip())
