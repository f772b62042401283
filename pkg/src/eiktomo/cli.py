"""Command-line driver: phantom -> forward solves -> noise -> reconstruction -> files.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure or a
stated tolerance that was not met.
"""
from __future__ import annotations

import argparse
import hashlib
import math
import sys
import time
from pathlib import Path

import numba
import numpy as np
import scipy

from . import __version__
from .eikonal import (DEFAULT_MAX_SWEEPS, DEFAULT_TOL, EikonalError, EikonalSinogram,
                      chord_sinogram, forward_sinogram, worker_count)
from .grid import AcquisitionGeometry, Grid2D, ScalarField2D, disk_mask
from .io import (FORMAT_VERSION, FormatError, read_grid, read_sinogram, write_grid,
                 write_manifest, write_pgm, write_sinogram)
from .metrics import box_mask, l2_norm, linf_norm, local_maxima, match_targets
from .phantoms import PRESETS, add_noise, build_phantom, load_phantom_spec, preset
from .recipes import RECIPES, evaluate_check, get_recipe
from .reconstruct import ReconstructionError, reconstruct_adjoint_bp, reconstruct_two_step
from .transforms import FanbeamSinogram, FilterSpec, fanbeam, fbp_fanbeam

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2

# built-in defaults, overridden by a recipe, overridden by explicit flags
DEFAULTS = dict(h=0.01, extent=0.8, radius=0.75, sources=18, receivers=153, noise=0.0, seed=0,
                filter="scaling_S", cutoff=0.25, combine="mean", kappa=0.2, epsilon=None,
                sigma=None, f0=None, phantom=None, background=None, mode=None)


class UsageError(Exception):
    pass


class ToleranceNotMet(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Run:
    """Collects outputs, timings and flags for the manifest of one command."""

    def __init__(self, command, argv, out):
        self.out = Path(out)
        self.manifest = {"command": command, "argv": list(argv), "config": {}, "timings": {},
                         "inputs": {}, "outputs": {}, "converged": {},
                         "versions": {"eiktomo": __version__, "numpy": np.__version__,
                                      "scipy": scipy.__version__, "numba": numba.__version__,
                                      "format": FORMAT_VERSION}}

    def timed(self, label, func, *args, **kwargs):
        t0 = time.perf_counter()
        value = func(*args, **kwargs)
        self.manifest["timings"][label] = time.perf_counter() - t0
        return value

    def input(self, path):
        self.manifest["inputs"][str(path)] = _sha256(path)

    def write(self, name, writer, obj):
        path = writer(self.out / name, obj)
        self.manifest["outputs"][name] = _sha256(path)
        return path

    def grid(self, stem, field, pgm=True):
        self.write(f"{stem}.grid", write_grid, field)
        if pgm:
            self.write(f"{stem}.pgm", write_pgm, field)

    def finish(self, name="manifest.json"):
        write_manifest(self.out / name, self.manifest)


def _resolve(args, keys):
    """Flag value if given, else recipe value, else built-in default."""
    recipe = get_recipe(args.recipe).to_dict() if getattr(args, "recipe", None) else {}
    cfg = {}
    for k in keys:
        v = getattr(args, k, None)
        if v is None:
            v = recipe.get(k, DEFAULTS.get(k))
            if v is None:
                v = DEFAULTS.get(k)
        cfg[k] = v
    if recipe:
        cfg["recipe"] = args.recipe
    return cfg, recipe


def _grid(cfg) -> Grid2D:
    return Grid2D.centered(cfg["extent"], cfg["h"])


def _phantom_field(name_or_path, grid, f0=None) -> ScalarField2D:
    if name_or_path is None:
        raise UsageError(f"no phantom given; available presets: {', '.join(sorted(PRESETS))}")
    path = Path(name_or_path)
    if path.suffix == ".json" or path.is_file():
        if not path.is_file():
            raise UsageError(f"phantom file {path} not found")
        spec = load_phantom_spec(path)
    elif name_or_path in PRESETS:
        spec = preset(name_or_path, f0=f0) if name_or_path == "example1" and f0 else preset(name_or_path)
    else:
        raise UsageError(f"unknown phantom {name_or_path!r}; available presets: "
                         f"{', '.join(sorted(PRESETS))}")
    return build_phantom(spec, grid)


def _geometry(cfg) -> AcquisitionGeometry:
    return AcquisitionGeometry(cfg["radius"], cfg["sources"], cfg["receivers"])


def _filter(cfg, geometry) -> FilterSpec:
    c = cfg.get("c")
    if cfg["filter"] == "scaling_S" and c is None:
        dt = 2 * geometry.radius / (geometry.n_receivers - 1)
        c = (2 * math.pi * cfg["cutoff"] / dt) ** 2
    spec = FilterSpec(cfg["filter"], c, cfg.get("normalization") or "calibrated")
    cfg["c_resolved"] = spec.c
    return spec


def _check_converged(run, label, flags):
    run.manifest["converged"][label] = list(flags)
    if not all(flags):
        bad = [k for k, ok in enumerate(flags) if not ok]
        raise EikonalError(f"{label}: Eikonal solver did not converge for sources {bad}")


# ---------------------------------------------------------------------------
# commands


def cmd_phantom(args, argv):
    cfg, _ = _resolve(args, ["phantom", "f0", "h", "extent"])
    run = Run("phantom", argv, args.out)
    run.manifest["config"] = cfg
    f = _phantom_field(cfg["phantom"], _grid(cfg), cfg["f0"])
    run.grid("phantom", f)
    run.finish()
    print(f"phantom {cfg['phantom']}: min {f.values.min():.6g} max {f.values.max():.6g} "
          f"-> {run.out / 'phantom.grid'}")
    return EXIT_OK


def _forward(run, cfg, args):
    grid = _grid(cfg)
    geo = _geometry(cfg)
    f = _phantom_field(cfg["phantom"], grid, cfg["f0"])
    run.grid("phantom", f)
    tol = args.tol if args.tol is not None else DEFAULT_TOL
    sweeps = args.max_sweeps if args.max_sweeps is not None else DEFAULT_MAX_SWEEPS
    cfg.update(tol=tol, max_sweeps=sweeps, workers=worker_count())
    clean = run.timed("forward", forward_sinogram, f, geo, tol, sweeps, cfg["phantom"])
    _check_converged(run, "forward", clean.converged)
    run.write("clean.sino", write_sinogram, clean)
    if getattr(args, "fanbeam", False):
        run.write("fanbeam.sino", write_sinogram, fanbeam(f - 1.0, geo))
    data = clean
    if cfg["noise"] > 0:
        reference = None
        if cfg.get("noise_reference") == "residual":
            if cfg.get("background"):
                fb = _phantom_field(cfg["background"], grid)
                base = forward_sinogram(fb, geo, tol, sweeps)
            else:
                base = chord_sinogram(geo)
            reference = clean.data - base.data
        data = add_noise(clean, cfg["noise"], cfg["seed"], per_source=not cfg.get("global_max"),
                         reference=reference)
        run.write("noisy.sino", write_sinogram, data)
    return f, grid, geo, data


def cmd_forward(args, argv):
    cfg, _ = _resolve(args, ["phantom", "f0", "h", "extent", "radius", "sources", "receivers",
                             "noise", "seed", "background"])
    cfg.update(global_max=args.global_max, noise_reference=args.noise_reference)
    if cfg["noise"] < 0:
        raise UsageError("--noise must be non-negative")
    run = Run("forward", argv, args.out)
    run.manifest["config"] = cfg
    try:
        _forward(run, cfg, args)
    finally:
        run.finish()
    print(f"forward {cfg['phantom']}: {cfg['sources']} sources x {cfg['receivers']} receivers "
          f"-> {run.out}")
    return EXIT_OK


def _reconstruct(run, cfg, p, grid, save):
    mode = cfg["mode"]
    geo = p.geometry
    if mode == "fbp":
        spec = _filter(cfg, geo)
        if isinstance(p, FanbeamSinogram):
            rec = run.timed("fbp", fbp_fanbeam, p, grid, spec)
        else:
            residual = FanbeamSinogram(geo, p.data - chord_sinogram(geo).data)
            fb = run.timed("fbp", fbp_fanbeam, residual, grid, spec)
            rec = ScalarField2D(grid, np.where(disk_mask(grid, geo.radius), 1.0 + fb.values, 1.0))
    elif mode == "twostep":
        if isinstance(p, FanbeamSinogram):
            raise UsageError("twostep needs an Eikonal (EIK-SINO) sinogram")
        spec = _filter(cfg, geo)
        res = run.timed("twostep", reconstruct_two_step, p, grid, spec, cfg["combine"])
        run.manifest["converged"]["twostep"] = list(res.converged)
        run.grid("f_hat", res.f_hat)
        if save:
            for k, c in enumerate(res.corrections):
                run.grid(f"correction_{k:03d}", c, pgm=False)
        rec = res.f_final
    elif mode == "adjoint-bp":
        if isinstance(p, FanbeamSinogram):
            raise UsageError("adjoint-bp needs an Eikonal (EIK-SINO) sinogram")
        if not cfg.get("background"):
            raise UsageError("adjoint-bp needs --background (preset name or phantom file)")
        fb = _phantom_field(cfg["background"], grid)
        run.grid("background", fb)
        res = run.timed("adjoint_bp", reconstruct_adjoint_bp, p, fb, cfg["epsilon"], cfg["sigma"],
                        None, cfg["kappa"])
        cfg.update(epsilon_resolved=res.epsilon, sigma_resolved=res.sigma)
        run.manifest["converged"]["adjoint_bp"] = list(res.converged)
        if save:
            for k, lam in enumerate(res.lambdas):
                run.grid(f"lambda_{k:03d}", lam, pgm=False)
        rec = res.reconstruction
    else:
        raise UsageError(f"unknown mode {mode!r}; expected fbp, twostep or adjoint-bp")
    run.grid("reconstruction", rec)
    return rec


RECON_KEYS = ["mode", "h", "extent", "filter", "c", "cutoff", "normalization", "combine",
              "background", "epsilon", "sigma", "kappa"]


def cmd_reconstruct(args, argv):
    cfg, _ = _resolve(args, RECON_KEYS)
    if cfg["mode"] is None:
        raise UsageError("--mode is required (fbp, twostep or adjoint-bp)")
    run = Run("reconstruct", argv, args.out)
    run.manifest["config"] = cfg
    try:
        p = read_sinogram(args.sinogram)
    except FileNotFoundError:
        raise UsageError(f"sinogram {args.sinogram} not found") from None
    run.input(args.sinogram)
    geo = p.geometry
    for flag, value in (("radius", geo.radius), ("sources", geo.n_sources),
                        ("receivers", geo.n_receivers)):
        given = getattr(args, flag)
        if given is not None and not np.isclose(given, value):
            raise UsageError(f"geometry mismatch: --{flag} {given} but the sinogram has {value}")
    grid = _grid(cfg)
    try:
        rec = _reconstruct(run, cfg, p, grid, args.save_intermediates)
    finally:
        run.finish()
    print(f"reconstruct ({cfg['mode']}): range [{rec.values.min():.6g}, {rec.values.max():.6g}] "
          f"-> {run.out / 'reconstruction.grid'}")
    return EXIT_OK


def cmd_run(args, argv):
    """Full pipeline for one recipe, with its pass/fail check."""
    recipe = get_recipe(args.recipe)
    cfg, _ = _resolve(args, ["phantom", "f0", "h", "extent", "radius", "sources", "receivers",
                             "noise", "seed", "background"] + RECON_KEYS)
    cfg.update(global_max=False, noise_reference=args.noise_reference)
    run = Run("run", argv, args.out)
    run.manifest["config"] = cfg
    try:
        f, grid, geo, data = _forward(run, cfg, args)
        report = {"kind": None, "passed": True}
        if cfg["mode"]:
            rec = _reconstruct(run, cfg, data, grid, args.save_intermediates)
            report = evaluate_check(recipe.check, rec)
        run.manifest["report"] = report
    finally:
        run.finish()
    verdict = "PASS" if report["passed"] else "FAIL"
    if report.get("informational"):
        verdict += " (informational)"
    print(f"recipe {args.recipe}: {verdict} {_summary(report)}")
    if not report["passed"] and not report.get("informational"):
        raise ToleranceNotMet(f"recipe {args.recipe} check failed")
    return EXIT_OK


def _summary(report):
    if report["kind"] == "ring":
        return f"ring contrast {report['contrast']:.4f} (min {report['min']})"
    if report["kind"] in ("maxima", "top"):
        pts = ", ".join(f"({m[0]:.2f}, {m[1]:.2f})" for m in report["maxima"])
        dist = ", ".join(f"{d:.3f}" for d in report["distances"])
        extra = f" separation {report['separation']:.3f}" if "separation" in report else ""
        return f"maxima [{pts}] target distances [{dist}] tol {report['tol']}{extra}"
    return ""


def _parse_points(text):
    try:
        pts = [tuple(float(v) for v in item.split(",")) for item in text.split(";") if item.strip()]
    except ValueError:
        raise UsageError(f"cannot parse points {text!r}; use 'x,y;x,y'") from None
    if any(len(p) != 2 for p in pts):
        raise UsageError(f"cannot parse points {text!r}; use 'x,y;x,y'")
    return pts


def cmd_compare(args, argv):
    try:
        a, b = read_grid(args.a), read_grid(args.b)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None
    if a.grid != b.grid:
        raise UsageError("grids differ in size, spacing or origin")
    diff = b - a
    l2, linf = l2_norm(diff), linf_norm(diff)
    print(f"L2   {l2:.6e}")
    print(f"Linf {linf:.6e}")
    ok = True
    if args.l2_tol is not None and l2 > args.l2_tol:
        ok = False
    if args.linf_tol is not None and linf > args.linf_tol:
        ok = False
    mask = box_mask(a.grid)
    if args.localize:
        peaks = {}
        for label, fld in (("a", a), ("b", b)):
            base = float(np.median(fld.values[mask])) if args.baseline is None else args.baseline
            peaks[label] = local_maxima(fld, mask, args.radius, base, args.threshold)
        targets = _parse_points(args.targets) if args.targets else [m[:2] for m in peaks["a"]]
        matched, dist = match_targets(peaks["b"], targets, args.tol)
        for label in ("a", "b"):
            pts = ", ".join(f"({m[0]:.3f}, {m[1]:.3f})" for m in peaks[label])
            print(f"maxima {label}: {len(peaks[label])} [{pts}]")
        print(f"matched {matched}/{len(targets)} within {args.tol}: "
              + ", ".join(f"{d:.3f}" for d in dist))
        if matched != len(targets) or len(peaks["b"]) != len(targets):
            ok = False
    print("PASS" if ok else "FAIL")
    if not ok:
        raise ToleranceNotMet("comparison tolerances not met")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eiktomo", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    grid = _Parser(add_help=False)
    grid.add_argument("--h", type=float, help="mesh size (default 0.01)")
    grid.add_argument("--extent", type=float, help="grid covers [-extent, extent]^2 (default 0.8)")
    grid.add_argument("--out", default=".", help="output directory")
    grid.add_argument("--recipe", choices=sorted(RECIPES), help="named experiment defaults")

    phant = _Parser(add_help=False)
    phant.add_argument("--phantom", "--name", dest="phantom",
                       help=f"preset ({', '.join(sorted(PRESETS))}) or JSON phantom file")
    phant.add_argument("--f0", type=float, help="box slowness for example1")

    geom = _Parser(add_help=False)
    geom.add_argument("--sources", type=int, help="number of sources (default 18)")
    geom.add_argument("--receivers", type=int, help="number of receivers (default 153)")
    geom.add_argument("--radius", type=float, help="acquisition circle radius (default 0.75)")

    solver = _Parser(add_help=False)
    solver.add_argument("--tol", type=float, help=f"sweep tolerance (default {DEFAULT_TOL})")
    solver.add_argument("--max-sweeps", type=int, help=f"pass cap (default {DEFAULT_MAX_SWEEPS})")

    noise = _Parser(add_help=False)
    noise.add_argument("--noise", type=float, help="relative noise level (default 0)")
    noise.add_argument("--seed", type=int, help="noise seed (default 0)")
    noise.add_argument("--noise-reference", choices=("data", "residual"), default="data",
                       help="scale noise by the row maximum of the data (default) or of the "
                            "residual against the background")

    recon = _Parser(add_help=False)
    recon.add_argument("--mode", choices=("fbp", "twostep", "adjoint-bp"))
    recon.add_argument("--filter", choices=("ramp", "hilbert_derivative", "scaling_S"))
    recon.add_argument("--c", type=float, help="scaling-filter parameter (overrides --cutoff)")
    recon.add_argument("--cutoff", type=float,
                       help="scaling-filter cut-off frequency times dt (default 0.25)")
    recon.add_argument("--normalization", choices=("calibrated", "paper_literal"))
    recon.add_argument("--combine", choices=("mean", "sum"))
    recon.add_argument("--background", help="assumed background phantom (adjoint-bp)")
    recon.add_argument("--epsilon", type=float, help="viscosity (default 2h)")
    recon.add_argument("--sigma", type=float, help="direction mollifier width (default 3h)")
    recon.add_argument("--kappa", type=float, help="grazing threshold for |n.d| (default 0.2)")
    recon.add_argument("--save-intermediates", action="store_true",
                       help="also write per-source corrections or multipliers")

    p = sub.add_parser("phantom", parents=[grid, phant], help="write a phantom grid and preview")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("forward", parents=[grid, phant, geom, solver, noise],
                       help="Eikonal sinogram of a phantom")
    p.add_argument("--background", help="background for --noise-reference residual")
    p.add_argument("--global-max", action="store_true", help="scale noise by the global maximum")
    p.add_argument("--fanbeam", action="store_true", help="also write the fanbeam data of f - 1")
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("reconstruct", parents=[grid, geom, recon], help="reconstruct from a sinogram")
    p.add_argument("sinogram", help="EIK-SINO or FAN-SINO file")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("run", parents=[grid, phant, geom, solver, noise, recon],
                       help="run a named recipe end to end and check it")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="error norms and peak localisation between two grids")
    p.add_argument("a", help="reference grid")
    p.add_argument("b", help="grid to test")
    p.add_argument("--l2-tol", type=float)
    p.add_argument("--linf-tol", type=float)
    p.add_argument("--localize", action="store_true", help="compare local maxima inside [-0.5,0.5]^2")
    p.add_argument("--targets", help="explicit targets 'x,y;x,y' (default: maxima of a)")
    p.add_argument("--tol", type=float, default=0.07, help="localisation tolerance")
    p.add_argument("--radius", type=float, default=0.05, help="maximum suppression radius")
    p.add_argument("--threshold", type=float, default=0.5, help="fraction of the peak")
    p.add_argument("--baseline", type=float, help="value subtracted before thresholding "
                                                  "(default: median inside the square)")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "run" and not args.recipe:
        parser.exit(EXIT_USAGE, "eiktomo run: error: --recipe is required\n")
    try:
        return args.func(args, argv)
    except (UsageError, FormatError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"eiktomo: error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except ToleranceNotMet as exc:
        print(f"eiktomo: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (EikonalError, ReconstructionError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"eiktomo: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"eiktomo: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
