"""Text grid and sinogram files, PGM previews and JSON manifests.

All writers are atomic: the payload goes to a temporary file in the target
directory which is then renamed over the destination.
"""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .eikonal import EikonalSinogram
from .grid import AcquisitionGeometry, Grid2D, ScalarField2D
from .transforms import FanbeamSinogram, ParallelSinogram

__all__ = ["FORMAT_VERSION", "FormatError", "atomic_write", "write_grid", "read_grid",
           "write_pgm", "write_sinogram", "read_sinogram", "write_parallel",
           "read_parallel", "write_manifest", "read_manifest"]

FORMAT_VERSION = 1


class FormatError(ValueError):
    pass


def atomic_write(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload.encode() if isinstance(payload, str) else payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _rows(a: np.ndarray) -> str:
    return "\n".join(" ".join(_fmt(v) for v in row) for row in np.atleast_2d(a)) + "\n"


def _read_table(path, tag, n_header):
    lines = Path(path).read_text().split("\n", 1)
    head = lines[0].split()
    if not head or head[0] != tag:
        raise FormatError(f"{path}: expected a {tag} header, found {lines[0][:40]!r}")
    if len(head) != n_header + 1:
        raise FormatError(f"{path}: {tag} header needs {n_header} fields")
    body = np.array(lines[1].split() if len(lines) > 1 else [], dtype=float)
    return head[1:], body


def write_grid(path, field: ScalarField2D) -> Path:
    """``EIK-GRID nx ny h origin_x origin_y`` then ``ny`` rows of ``nx`` values."""
    g = field.grid
    header = f"EIK-GRID {g.nx} {g.ny} {_fmt(g.h)} {_fmt(g.origin[0])} {_fmt(g.origin[1])}\n"
    return atomic_write(path, header + _rows(field.values))


def read_grid(path) -> ScalarField2D:
    head, body = _read_table(path, "EIK-GRID", 5)
    nx, ny = int(head[0]), int(head[1])
    h, ox, oy = (float(v) for v in head[2:])
    if body.size != nx * ny:
        raise FormatError(f"{path}: expected {nx * ny} values, found {body.size}")
    return ScalarField2D(Grid2D(nx, ny, h, (ox, oy)), body.reshape(ny, nx))


def write_pgm(path, field: ScalarField2D) -> Path:
    """8-bit binary PGM, min-max scaled, one pixel per node, +y upwards."""
    v = field.values[::-1]
    lo, hi = float(v.min()), float(v.max())
    scaled = np.zeros(v.shape) if hi <= lo else (v - lo) / (hi - lo)
    img = np.round(255 * scaled).astype(np.uint8)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode()
    return atomic_write(path, header + img.tobytes())


def write_sinogram(path, p) -> Path:
    """``EIK-SINO`` (travel times) or ``FAN-SINO`` (line integrals).

    Header: ``TAG m n R source_start receiver_start``, then m rows of n values.
    """
    tag = "FAN-SINO" if isinstance(p, FanbeamSinogram) else "EIK-SINO"
    g = p.geometry
    header = (f"{tag} {g.n_sources} {g.n_receivers} {_fmt(g.radius)} "
              f"{_fmt(g.source_angles[0])} {_fmt(g.receiver_angles[0])}\n")
    return atomic_write(path, header + _rows(p.data))


def read_sinogram(path):
    first = Path(path).read_text().split(None, 1)[0] if Path(path).stat().st_size else ""
    if first not in ("EIK-SINO", "FAN-SINO"):
        raise FormatError(f"{path}: not an EIK-SINO or FAN-SINO file")
    head, body = _read_table(path, first, 5)
    m, n = int(head[0]), int(head[1])
    R, s0, r0 = (float(v) for v in head[2:])
    if body.size != m * n:
        raise FormatError(f"{path}: expected {m * n} values, found {body.size}")
    geo = AcquisitionGeometry(R, m, n, source_start=s0, receiver_start=r0)
    data = body.reshape(m, n)
    if first == "FAN-SINO":
        return FanbeamSinogram(geo, data)
    return EikonalSinogram(geo, data, Path(path).stem)


def write_parallel(path, p: ParallelSinogram) -> Path:
    header = f"PAR-SINO {p.n_angles} {p.n_offsets} {_fmt(p.radius)}\n"
    return atomic_write(path, header + _rows(p.data))


def read_parallel(path) -> ParallelSinogram:
    head, body = _read_table(path, "PAR-SINO", 3)
    na, no = int(head[0]), int(head[1])
    if body.size != na * no:
        raise FormatError(f"{path}: expected {na * no} values, found {body.size}")
    return ParallelSinogram(body.reshape(na, no), float(head[2]))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_manifest(path, manifest: dict) -> Path:
    body = {"format_version": FORMAT_VERSION, **_jsonable(manifest)}
    return atomic_write(path, json.dumps(body, indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())
