import csv
import io
import json

import numpy as np
import pytest

from conftest import circle_phi
from polydg_shape import optimizer as opt_mod
from polydg_shape.cli import (EXPORT_SCHEMA, OPTIMIZE_SCHEMA, OUTPUT_ROOT_ENV, TABLE_SCHEMA, ConfigError,
                              bundled_config, cmd_convergence_table, json_pointer, load_config, main,
                              optimizer_config, resolve_config)
from polydg_shape.mesh.agglomerate import agglomerate, split_counts
from polydg_shape.mesh.generators import disc_mesh, square_mesh
from polydg_shape.mesh.io import read_mesh_text
from polydg_shape.mesh.refine import refine_to_fit
from polydg_shape.vtk import read_vtk_mesh, write_vtk


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return path


def read_cell_field(path, name):
    lines = path.read_text().splitlines()
    start = lines.index(next(ln for ln in lines if ln.startswith(f"SCALARS {name} ")))
    n = int(next(ln for ln in lines if ln.startswith("CELL_DATA")).split()[1])
    return np.array([int(v) for v in lines[start + 2:start + 2 + n]])


# -- config validation ----------------------------------------------------------

def test_armijo_constant_out_of_range(tmp_path):
    path = write_json(tmp_path / "c.json", {"problem": "unconstrained", "c": 1.5})
    with pytest.raises(ConfigError) as err:
        load_config(path, OPTIMIZE_SCHEMA)
    assert err.value.messages[0].startswith("/c:")


def test_unknown_keys_rejected(tmp_path):
    path = write_json(tmp_path / "u.json", {"problem": "bernoulli", "speed": 3, "mesh": {"kind": "disc", "size": 2}})
    with pytest.raises(ConfigError) as err:
        load_config(path, OPTIMIZE_SCHEMA)
    pointers = {m.split(":")[0] for m in err.value.messages}
    assert pointers == {"/", "/mesh"}


def test_invalid_json_and_missing_problem(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad, OPTIMIZE_SCHEMA)
    with pytest.raises(ConfigError):
        load_config(write_json(tmp_path / "e.json", {}), OPTIMIZE_SCHEMA)


def test_time_step_modes(tmp_path):
    doc = {"problem": "unconstrained", "time_step": {"mode": "cfl", "cfl": 0.4}, "c": 0.05}
    cfg = optimizer_config(load_config(write_json(tmp_path / "t.json", doc), OPTIMIZE_SCHEMA))
    assert cfg.dt is None and cfg.cfl == 0.4 and cfg.armijo_c == 0.05
    doc["time_step"] = {"mode": "fixed", "dt": 0.002}
    cfg = optimizer_config(load_config(write_json(tmp_path / "t.json", doc), OPTIMIZE_SCHEMA))
    assert cfg.dt == 0.002
    doc["time_step"] = {"mode": "fixed"}
    with pytest.raises(ConfigError):
        load_config(write_json(tmp_path / "t.json", doc), OPTIMIZE_SCHEMA)


def test_json_pointer_escaping():
    assert json_pointer(["a/b", "c~d", 0]) == "/a~1b/c~0d/0"
    assert json_pointer([]) == ""


@pytest.mark.parametrize("name, schema", [("unconstrained.json", OPTIMIZE_SCHEMA), ("bernoulli.json", OPTIMIZE_SCHEMA),
                                          ("unconstrained_cfl.json", OPTIMIZE_SCHEMA),
                                          ("bernoulli_cfl.json", OPTIMIZE_SCHEMA),
                                          ("bernoulli_smiley.json", OPTIMIZE_SCHEMA),
                                          ("bernoulli_smiley_cfl.json", OPTIMIZE_SCHEMA),
                                          ("table1.json", TABLE_SCHEMA), ("export_mesh.json", EXPORT_SCHEMA)])
def test_bundled_configs_valid(name, schema):
    load_config(bundled_config(name), schema)


def test_resolve_config(tmp_path):
    assert resolve_config("bernoulli") == bundled_config("bernoulli.json")
    local = write_json(tmp_path / "x.json", {})
    assert resolve_config(str(local)) == local
    with pytest.raises(FileNotFoundError):
        resolve_config("no_such_config")


# -- VTK ------------------------------------------------------------------------

def test_vtk_geometry_only(tmp_path):
    mesh = square_mesh(3)
    write_vtk(tmp_path / "g.vtk", mesh)
    text = (tmp_path / "g.vtk").read_text()
    assert text.startswith("# vtk DataFile Version 2.0\n")
    assert "CELL_DATA" not in text and "POINT_DATA" not in text
    assert f"CELL_TYPES {mesh.n_triangles}" in text


def test_vtk_round_trip(tmp_path):
    mesh = disc_mesh(6)
    write_vtk(tmp_path / "d.vtk", mesh, {"phi": mesh.vertices[:, 0]}, {"id": np.arange(mesh.n_triangles)})
    back = read_vtk_mesh(tmp_path / "d.vtk")
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.triangles, mesh.triangles)


def test_vtk_deterministic_bytes(tmp_path):
    mesh = square_mesh(5)
    fields = ({"v": np.column_stack([np.sin(mesh.vertices[:, 0]), mesh.vertices[:, 1]])},
              {"s": np.ones(mesh.n_triangles, dtype=int)})
    write_vtk(tmp_path / "a.vtk", mesh, *fields)
    write_vtk(tmp_path / "b.vtk", mesh, *fields)
    assert (tmp_path / "a.vtk").read_bytes() == (tmp_path / "b.vtk").read_bytes()


def test_vtk_partition_ids(tmp_path):
    base = square_mesh(12)
    fit = refine_to_fit(base, circle_phi(0.5)(base.vertices))
    kp, km = split_counts(int((~fit.inside).sum()), int(fit.inside.sum()), 30)
    poly = agglomerate(fit, k_plus=kp, k_minus=km, seed=0)
    write_vtk(tmp_path / "p.vtk", fit, None, {"partition": poly.labels})
    ids = read_cell_field(tmp_path / "p.vtk", "partition")
    assert np.array_equal(ids, poly.labels)
    assert len(np.unique(ids)) == poly.n_elements >= kp + km


def test_vtk_field_checks(tmp_path):
    mesh = square_mesh(2)
    with pytest.raises(ValueError):
        write_vtk(tmp_path / "x.vtk", mesh, {"phi": np.zeros(3)})
    with pytest.raises(ValueError):
        write_vtk(tmp_path / "x.vtk", mesh, None, {"bad name": np.zeros(mesh.n_triangles)})


# -- commands -------------------------------------------------------------------

def test_convergence_table_single_level(tmp_path):
    path = write_json(tmp_path / "t.json", {"levels": [36], "base_n": 24, "degrees": [1]})
    out = io.StringIO()
    assert cmd_convergence_table(path, out) == 0
    rows = list(csv.reader(io.StringIO(out.getvalue())))
    assert rows[0] == ["i", "N", "err_l", "rate_l", "err_q", "rate_q"]
    assert len(rows) == 2 and rows[1][:2] == ["1", "36"]
    assert float(rows[1][2]) > 0 and rows[1][3] == "" and rows[1][4] == "" and rows[1][5] == ""


def test_convergence_table_two_levels(tmp_path):
    path = write_json(tmp_path / "t.json", {"levels": [36, 144], "base_n": 24, "degrees": [1, 2]})
    out = io.StringIO()
    cmd_convergence_table(path, out)
    rows = list(csv.DictReader(io.StringIO(out.getvalue())))
    e = [float(r["err_l"]) for r in rows]
    assert float(rows[1]["rate_l"]) == pytest.approx(np.log(e[1] / e[0]) / np.log(4), rel=1e-5)
    assert rows[0]["rate_q"] == "" and rows[1]["rate_q"] != ""


def test_export_mesh(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path))
    cfg = write_json(tmp_path / "e.json", {"mesh": {"kind": "disc", "rings": 6}, "initial": "two_holes",
                                           "polytopes": 20, "name": "m", "output": {"directory": "out"}})
    assert main(["export-mesh", str(cfg)]) == 0
    summary = json.loads(capsys.readouterr().out)
    text = read_mesh_text(tmp_path / "out" / "m.mesh")
    vtk = read_vtk_mesh(tmp_path / "out" / "m.vtk")
    assert text.n_triangles == vtk.n_triangles == summary["triangles"]
    assert np.array_equal(text.vertices, vtk.vertices)
    first = (tmp_path / "out" / "m.vtk").read_bytes()
    main(["export-mesh", str(cfg)])
    assert (tmp_path / "out" / "m.vtk").read_bytes() == first


def tiny_optimize(tmp_path, **extra):
    doc = {"problem": "unconstrained", "mesh": {"kind": "square", "n": 10}, "polytopes": 30,
           "time_step": {"mode": "cfl", "cfl": 0.3}, "max_steps": 10, "max_iterations": 2,
           "output": {"directory": "run"}}
    doc.update(extra)
    return write_json(tmp_path / "o.json", doc)


def test_optimize_writes_artifacts(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / "root"))
    assert main(["optimize", str(tiny_optimize(tmp_path))]) == 0
    summary = json.loads(capsys.readouterr().out)
    run = tmp_path / "root" / "run"
    assert summary["output"] == str(run)
    rows = list(csv.reader((run / "history.csv").open(newline="")))
    assert rows[0] == ["iteration", "n", "t", "J", "grad_norm_sq", "accepted_m", "zls_distance"]
    assert len(rows) - 1 == summary["iterations"]
    vtks = sorted(run.glob("iter_*_fine.vtk"))
    assert len(vtks) >= 1
    text = vtks[0].read_text()
    assert "SCALARS partition int 1" in text and "SCALARS phi double 1" in text and "VECTORS grad_J double" in text
    read_vtk_mesh(vtks[0])
    first = (run / "history.csv").read_bytes()
    main(["optimize", str(tiny_optimize(tmp_path))])
    assert (run / "history.csv").read_bytes() == first


def test_optimize_bernoulli_state_file(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path))
    cfg = tiny_optimize(tmp_path, problem="bernoulli", mesh={"kind": "disc", "rings": 8}, initial="two_holes",
                        max_iterations=1)
    assert main(["optimize", str(cfg)]) == 0
    state = sorted((tmp_path / "run").glob("iter_*_state.vtk"))
    assert state and "SCALARS u double 1" in state[0].read_text()


def test_exit_codes(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path))
    bad = write_json(tmp_path / "bad.json", {"problem": "unconstrained", "c": 1.5})
    assert main(["optimize", str(bad)]) == 1
    assert "config error: /c:" in capsys.readouterr().err
    assert main(["optimize", str(tmp_path / "missing.json")]) == 1
    monkeypatch.setitem(opt_mod.INITIAL_LEVEL_SETS, "disc", lambda x: np.ones(len(x)))
    assert main(["optimize", str(tiny_optimize(tmp_path))]) == 2


def test_output_root_default(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv(OUTPUT_ROOT_ENV, raising=False)
    monkeypatch.chdir(tmp_path)
    cfg = write_json(tmp_path / "e.json", {"mesh": {"kind": "square", "n": 2}, "formats": ["text"]})
    assert main(["export-mesh", str(cfg)]) == 0
    assert (tmp_path / "meshes" / "mesh.mesh").exists()
