import io
import json

import numpy as np
import pytest

from inductheat.cli_io import (ConfigError, SimulationConfig, load_config, main, parse_config,
                               read_error_csv, serialize_config, write_error_csv, write_vtk_step)
from inductheat.harness import ErrorReport, ExperimentSpec
from inductheat.mesh import Mesh, generate_rect_mesh

TRI = Mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])


def test_minimal_config_fills_defaults():
    cfg = parse_config("preset = disk_eccentric\n")
    assert cfg.spec.preset == "disk_eccentric"
    assert cfg.spec.T == 8.0 and cfg.spec.tau == 2 ** -5
    assert cfg.spec.sigma_workpiece is None
    assert cfg.vtk_stride == 0 and cfg.threads == 1


def test_sections_and_comments():
    cfg = parse_config("[experiment]\npreset = coupled_2d  # the rectangle\n"
                       "; a comment\n[time]\nT = 1.0\ntau = 0.125\n")
    assert cfg.spec.nx == 200 and cfg.spec.T == 1.0 and cfg.spec.tau == 0.125


def test_tau_exceeding_tau_max_names_both_keys():
    with pytest.raises(ConfigError) as err:
        parse_config("tau = 0.3\n")
    msg = str(err.value)
    assert "tau" in msg and "tau_max" in msg and "line 1" in msg


def test_unknown_key_reports_line():
    with pytest.raises(ConfigError) as err:
        parse_config("preset = disk_concentric\n\nfrobnicate = 3\n")
    assert err.value.line == 3 and err.value.key == "frobnicate"
    assert "line 3" in str(err.value)


@pytest.mark.parametrize("text", [
    "tau = 0.125\ntau = 0.25\n",
    "preset = cube\n",
    "T = abc\n",
    "just words\n",
    "T = 1.0\ntau = 0.15\n",
    "tau_list = 0.5, 0.25\n",
    "quad_degree = 3\n",
    "nx = 0\npreset = coupled_2d\n",
])
def test_config_rejections(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_round_trip():
    spec = ExperimentSpec("coupled_2d", T=2.0, cutoff=1e5, sigma_coil=1e7,
                          velocity=(0.0, 0.1 / 3)).resolved()
    cfg = SimulationConfig(spec, output_dir="out dir", vtk_stride=3, threads=2, cache=True)
    again = parse_config(serialize_config(cfg))
    assert again == cfg
    assert again.spec.velocity[1] == 0.1 / 3


def test_load_config_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(str(tmp_path / "nope.cfg"))


def test_vtk_single_triangle(tmp_path):
    path = write_vtk_step(TRI, {"u": np.array([1.0, 2.0, 3.0]), "region": np.array([0, 1, 2]),
                                "Q": np.array([0.5])}, str(tmp_path / "t.vtk"))
    text = open(path).read()
    assert text.startswith("# vtk DataFile Version 2.0\n")
    assert "DATASET UNSTRUCTURED_GRID" in text
    assert "POINTS 3 double" in text
    assert "CELLS 1 4\n3 0 1 2" in text
    assert "CELL_TYPES 1\n5" in text
    assert "POINT_DATA 3" in text and "SCALARS u double 1" in text
    assert "SCALARS region int 1" in text
    assert "CELL_DATA 1" in text and "SCALARS Q double 1" in text


def test_vtk_geometry_only(tmp_path):
    m = generate_rect_mesh(1, 1, 2, 2)
    text = open(write_vtk_step(m, {}, str(tmp_path / "g.vtk"))).read()
    assert f"POINTS {m.n_nodes} double" in text and "POINT_DATA" not in text


def test_vtk_bad_length(tmp_path):
    with pytest.raises(ValueError):
        write_vtk_step(TRI, {"u": np.ones(4)}, str(tmp_path / "b.vtk"))


def test_error_csv(tmp_path):
    rows = [(0.25, 0.1 / 3), (0.125, 1 / 7), (2 ** -5, 2 / 9)]
    report = ErrorReport(rows, tau_ref=2 ** -6)
    path = write_error_csv(report, str(tmp_path / "e.csv"))
    lines = open(path).read().splitlines()
    assert lines[0] == "tau,E_u,sqrt_E_u"
    assert len(lines) == 5 and lines[-1].startswith("# slope=")
    back, footer = read_error_csv(path)
    assert back == sorted(rows)
    assert footer["tau_ref"] == 2 ** -6
    assert footer["slope"] == report.slope


def test_error_csv_empty(tmp_path):
    path = write_error_csv(ErrorReport([], tau_ref=0.25), str(tmp_path / "e.csv"))
    assert open(path).read() == "tau,E_u,sqrt_E_u\n"
    assert read_error_csv(path) == ([], {})


def test_main_usage_errors(tmp_path):
    assert main(["frobnicate"], io.StringIO()) == 1
    assert main([], io.StringIO()) == 1
    assert main(["run", "--config", str(tmp_path / "missing.cfg")], io.StringIO()) == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text("tau = 0.3\n")
    assert main(["run", "--config", str(bad)], io.StringIO()) == 1


def test_main_mesh_info():
    out = io.StringIO()
    assert main(["mesh-info", "--preset", "coupled_2d"], out) == 0
    text = out.getvalue()
    assert "40401" in text and "80000" in text


def test_main_run_writes_outputs(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("preset = coupled_2d\nnx = 20\nny = 20\nT = 0.5\ntau = 0.125\n"
                   "vtk_stride = 2\n")
    out = io.StringIO()
    assert main(["run", "--config", str(cfg), "--output", str(tmp_path / "o")], out) == 0
    files = sorted(p.name for p in (tmp_path / "o").iterdir())
    assert files == ["manifest.json", "step_000002.vtk", "step_000004.vtk", "u_final.npy"]
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["command"] == "run"
    assert manifest["config"]["nx"] == 20
    assert set(manifest["versions"]) >= {"inductheat", "numpy", "scipy", "python"}
    assert np.load(tmp_path / "o" / "u_final.npy").shape == (441,)


def test_main_converge(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("preset = disk_concentric\ntarget_h = 0.03\nT = 1.0\ntau = 0.25\n"
                   "tau_ref = 0.0625\ntau_list = 0.25, 0.125\n")
    out = io.StringIO()
    assert main(["converge", "--config", str(cfg), "--output", str(tmp_path)], out) == 0
    rows, footer = read_error_csv(str(tmp_path / "errors.csv"))
    assert [t for t, _ in rows] == [0.125, 0.25]
    assert "rate" in out.getvalue() and footer["tau_ref"] == 0.0625
