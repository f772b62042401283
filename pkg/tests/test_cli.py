import json

import numpy as np
import pytest

from eiktomo.cli import main
from eiktomo.eikonal import chord_sinogram
from eiktomo.grid import AcquisitionGeometry, ScalarField2D
from eiktomo.io import read_grid, read_sinogram, write_grid, write_sinogram


def test_phantom_command(tmp_path, capsys):
    assert main(["phantom", "--name", "example3", "--out", str(tmp_path)]) == 0
    f = read_grid(tmp_path / "phantom.grid")
    assert f.values.max() == 1.5 and f.values.min() == 1.0
    assert (tmp_path / "phantom.pgm").read_bytes().startswith(b"P5")
    assert json.loads((tmp_path / "manifest.json").read_text())["command"] == "phantom"


def test_phantom_f0(tmp_path):
    assert main(["phantom", "--name", "example1", "--f0", "2", "--out", str(tmp_path)]) == 0
    assert read_grid(tmp_path / "phantom.grid").values.max() == 2.0


def test_unknown_phantom(tmp_path, capsys):
    assert main(["phantom", "--name", "nope", "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "example3" in err and "ring" in err


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["phantom", "--bogus"])
    assert exc.value.code == 1


def test_forward_homogeneous_chords(tmp_path):
    assert main(["forward", "--phantom", "homogeneous", "--out", str(tmp_path)]) == 0
    p = read_sinogram(tmp_path / "clean.sino")
    assert p.geometry == AcquisitionGeometry(0.75, 18, 153)
    assert np.max(np.abs(p.data - chord_sinogram(p.geometry).data)) <= 0.02


def test_forward_noise_deterministic(tmp_path):
    args = ["forward", "--phantom", "example3", "--h", "0.02", "--noise", "0.05", "--seed", "4"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a, b = (read_sinogram(tmp_path / d / "noisy.sino") for d in "ab")
    assert np.array_equal(a.data, b.data)
    clean = read_sinogram(tmp_path / "a" / "clean.sino")
    assert not np.array_equal(a.data, clean.data)


def test_forward_example1_recipes(tmp_path):
    for name in ("example1", "example1-f2"):
        assert main(["run", "--recipe", name, "--out", str(tmp_path / name)]) == 0
    a, b = (read_sinogram(tmp_path / n / "clean.sino") for n in ("example1", "example1-f2"))
    assert np.max(np.abs(a.data - b.data)) <= 0.02


def test_forward_solver_failure_exit_code(tmp_path, capsys):
    rc = main(["forward", "--phantom", "example3", "--h", "0.02", "--max-sweeps", "1",
               "--out", str(tmp_path)])
    assert rc == 2
    assert "did not converge" in capsys.readouterr().err
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert not all(manifest["converged"]["forward"])


def test_fbp_of_zero_residual(tmp_path):
    geo = AcquisitionGeometry(0.75, 18, 153)
    write_sinogram(tmp_path / "p.sino", chord_sinogram(geo))
    assert main(["reconstruct", "--mode", "fbp", str(tmp_path / "p.sino"),
                 "--out", str(tmp_path / "r")]) == 0
    rec = read_grid(tmp_path / "r" / "reconstruction.grid")
    assert np.max(np.abs(rec.values - 1.0)) <= 0.02


def test_reconstruct_geometry_mismatch(tmp_path, capsys):
    geo = AcquisitionGeometry(0.75, 18, 153)
    write_sinogram(tmp_path / "p.sino", chord_sinogram(geo))
    assert main(["reconstruct", "--mode", "fbp", str(tmp_path / "p.sino"), "--receivers", "150",
                 "--out", str(tmp_path / "r")]) == 1
    assert "mismatch" in capsys.readouterr().err
    assert main(["reconstruct", "--mode", "adjoint-bp", str(tmp_path / "p.sino"),
                 "--out", str(tmp_path / "r")]) == 1


def test_compare_identical_and_shifted(tmp_path, capsys, grid01):
    f = ScalarField2D.from_function(grid01, lambda x, y: np.sin(4 * x) * np.cos(3 * y))
    write_grid(tmp_path / "a.grid", f)
    assert main(["compare", str(tmp_path / "a.grid"), str(tmp_path / "a.grid"),
                 "--l2-tol", "0", "--linf-tol", "0"]) == 0
    out = capsys.readouterr().out
    assert "L2   0.000000e+00" in out and "Linf 0.000000e+00" in out
    shifted = np.empty_like(f.values)
    shifted[:, :-1] = f.values[:, 1:]
    shifted[:, -1] = f.values[:, -1]
    write_grid(tmp_path / "b.grid", f.with_values(shifted))
    main(["compare", str(tmp_path / "a.grid"), str(tmp_path / "b.grid")])
    linf = float([ln for ln in capsys.readouterr().out.splitlines() if ln.startswith("Linf")][0].split()[1])
    gmax = np.max(np.abs(4 * np.cos(4 * grid01.mesh()[0]) * np.cos(3 * grid01.mesh()[1])))
    assert abs(linf - gmax * grid01.h) <= 0.1 * gmax * grid01.h
    assert main(["compare", str(tmp_path / "a.grid"), str(tmp_path / "b.grid"),
                 "--linf-tol", "1e-6"]) == 2


def test_example3_truth_vs_two_step(tmp_path, capsys):
    assert main(["run", "--recipe", "example4", "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    assert main(["compare", str(tmp_path / "phantom.grid"), str(tmp_path / "reconstruction.grid"),
                 "--localize"]) == 0
    assert "matched 4/4" in capsys.readouterr().out


def test_manifest_reproduces_run(tmp_path):
    args = ["run", "--recipe", "example6-noiseless", "--h", "0.02", "--sources", "6",
            "--noise", "0.01", "--seed", "3", "--save-intermediates"]
    main(args + ["--out", str(tmp_path / "a")])
    first = json.loads((tmp_path / "a" / "manifest.json").read_text())
    argv = first["argv"]
    argv[argv.index("--out") + 1] = str(tmp_path / "b")
    main(argv)
    second = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert first["outputs"] == second["outputs"]
    assert "lambda_005.grid" in first["outputs"]
    assert first["config"]["epsilon_resolved"] == 0.005
    assert {"numpy", "scipy", "numba", "format"} <= set(first["versions"])


def test_json_phantom_file(tmp_path):
    spec = tmp_path / "ph.json"
    spec.write_text(json.dumps({"boxes": [{"center": [0, 0], "width": 0.2, "height": 0.2,
                                           "value": 1.2}]}))
    assert main(["phantom", "--phantom", str(spec), "--out", str(tmp_path / "o")]) == 0
    assert read_grid(tmp_path / "o" / "phantom.grid").values.max() == 1.2
    assert main(["phantom", "--phantom", str(tmp_path / "missing.json"),
                 "--out", str(tmp_path / "o")]) == 1
