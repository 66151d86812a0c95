"""Command-line front end: ``optimize``, ``convergence-table`` and ``export-mesh``.

Every command takes a JSON config file. Configs are validated against the
schemas below (unknown keys are rejected) and problems are reported with
JSON-pointer paths. Relative output directories are resolved against
``$POLYDG_OUTPUT_ROOT`` (default: the current directory).

Exit codes: 0 clean termination, 2 optimisation stopped on a degenerate
iterate, 1 any error (including an invalid config).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .convergence import convergence_table
from .mesh.agglomerate import agglomerate_total
from .mesh.io import write_mesh_text
from .mesh.refine import FittedMesh, refine_to_fit
from .mesh.simplicial import SimplicialMesh
from .optimizer import INITIAL_LEVEL_SETS, INTEGRANDS, OptimizerConfig, ShapeOptimizer, build_base_mesh
from .vtk import write_vtk

log = logging.getLogger("polydg_shape")

OUTPUT_ROOT_ENV = "POLYDG_OUTPUT_ROOT"
EXIT_OK, EXIT_ERROR, EXIT_DEGENERATE = 0, 1, 2

_MESH_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["square", "disc"]},
        "n": {"type": "integer", "minimum": 1},
        "half_width": {"type": "number", "exclusiveMinimum": 0},
        "rings": {"type": "integer", "minimum": 1},
        "radius": {"type": "number", "exclusiveMinimum": 0},
        "triangles": {"type": ["integer", "null"], "minimum": 1},
    },
}

_OUTPUT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "directory": {"type": "string", "minLength": 1},
        "vtk": {"type": "boolean"},
        "csv": {"type": "boolean"},
        "vtk_every": {"type": "integer", "minimum": 1},
    },
}

OPTIMIZE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["problem"],
    "properties": {
        "problem": {"enum": ["unconstrained", "bernoulli"]},
        "mesh": _MESH_SCHEMA,
        "degree": {"enum": [1, 2]},
        "time_step": {
            "oneOf": [
                {"type": "object", "additionalProperties": False, "required": ["mode", "dt"],
                 "properties": {"mode": {"const": "fixed"}, "dt": {"type": "number", "exclusiveMinimum": 0}}},
                {"type": "object", "additionalProperties": False, "required": ["mode"],
                 "properties": {"mode": {"const": "cfl"},
                                "cfl": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}}},
            ]
        },
        "max_steps": {"type": "integer", "minimum": 5},
        "c": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "max_iterations": {"type": "integer", "minimum": 1},
        "polytopes": {"type": "integer", "minimum": 2},
        "seed": {"type": "integer", "minimum": 0},
        "C_sigma": {"type": "number", "exclusiveMinimum": 0},
        "initial": {"enum": sorted(INITIAL_LEVEL_SETS)},
        "integrand": {"enum": sorted(INTEGRANDS)},
        "reference": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["cassini", "circle", "none"]},
                "radius": {"type": "number", "exclusiveMinimum": 0},
                "center": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
            },
        },
        "scheme": {"enum": ["heun", "ssp3"]},
        "output": _OUTPUT_SCHEMA,
    },
}

TABLE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "levels": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
        "base_n": {"type": "integer", "minimum": 2},
        "radius": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "reference_refinements": {"type": "integer", "minimum": 0, "maximum": 3},
        "seed": {"type": "integer", "minimum": 0},
        "degrees": {"type": "array", "items": {"enum": [1, 2]}, "minItems": 1, "uniqueItems": True},
        "C_sigma": {"type": "number", "exclusiveMinimum": 0},
    },
}

EXPORT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["mesh"],
    "properties": {
        "mesh": _MESH_SCHEMA,
        "initial": {"enum": sorted(INITIAL_LEVEL_SETS)},
        "polytopes": {"type": "integer", "minimum": 2},
        "seed": {"type": "integer", "minimum": 0},
        "formats": {"type": "array", "items": {"enum": ["text", "vtk"]}, "minItems": 1, "uniqueItems": True},
        "name": {"type": "string", "minLength": 1},
        "output": {"type": "object", "additionalProperties": False,
                   "properties": {"directory": {"type": "string", "minLength": 1}}},
    },
}


class ConfigError(ValueError):
    """Invalid configuration; ``messages`` are ``<json pointer>: <problem>`` strings."""

    def __init__(self, messages: list[str]):
        super().__init__("; ".join(messages))
        self.messages = messages


def json_pointer(path) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in path)


def validate(document, schema) -> None:
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(document), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        raise ConfigError([f"{json_pointer(e.absolute_path) or '/'}: {e.message}" for e in errors])


def load_config(path, schema) -> dict:
    try:
        document = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"/: not valid JSON ({exc})"]) from exc
    validate(document, schema)
    return document


def bundled_config(name: str) -> Path:
    """Path of a config shipped with the package, e.g. ``unconstrained.json``."""
    return Path(str(resources.files("polydg_shape") / "configs" / name))


def output_directory(relative: str) -> Path:
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "."))
    out = root / relative
    out.mkdir(parents=True, exist_ok=True)
    return out


def optimizer_config(doc: dict) -> OptimizerConfig:
    kw = {k: v for k, v in doc.items() if k not in ("time_step", "c", "output")}
    step = doc.get("time_step")
    if step is not None:
        if step["mode"] == "fixed":
            kw["dt"] = float(step["dt"])
        else:
            kw["dt"] = None
            kw["cfl"] = float(step.get("cfl", 0.3))
    if "c" in doc:
        kw["armijo_c"] = doc["c"]
    factory = OptimizerConfig.unconstrained if doc["problem"] == "unconstrained" else OptimizerConfig.bernoulli
    return factory(**kw)


# -- VTK artifacts ------------------------------------------------------------

def _vertex_average(mesh, triangles, values_per_corner) -> np.ndarray:
    """Average per-corner values of the given triangles at mesh vertices."""
    ids = mesh.triangles[triangles].ravel()
    counts = np.bincount(ids, minlength=mesh.n_vertices)
    sums = np.bincount(ids, weights=values_per_corner.ravel(), minlength=mesh.n_vertices)
    return sums / np.maximum(counts, 1)


def write_iteration_vtk(directory: Path, k: int, it, fine_grad) -> list[Path]:
    fitted: FittedMesh = it.fitted
    poly = it.poly
    paths = []
    point = {"phi": it.phi.evaluate(fitted.vertices)}
    if fine_grad is not None and fine_grad.mesh is fitted:
        point["grad_J"] = fine_grad.vertex_values()
    cell = {"sign": fitted.sign.astype(np.int64)}
    if poly is not None and poly.fine is fitted:
        cell["partition"] = poly.labels
    path = directory / f"iter_{k:03d}_fine.vtk"
    write_vtk(path, fitted, point, cell, title=f"iteration {k} fine mesh")
    paths.append(path)
    if it.state is not None:
        sub = it.state.sub
        tris = np.flatnonzero(sub.labels >= 0)
        corners = fitted.coords[tris]  # (nt, 3, 2)
        el = np.repeat(sub.labels[tris], 3)
        u_corner = it.state.u.evaluate(el, corners.reshape(-1, 2)).reshape(-1, 3)
        used = np.unique(fitted.triangles[tris])
        remap = -np.ones(fitted.n_vertices, dtype=np.int64)
        remap[used] = np.arange(len(used))
        submesh = SimplicialMesh(fitted.vertices[used], remap[fitted.triangles[tris]])
        u_vertex = _vertex_average(fitted, tris, u_corner)[used]
        path = directory / f"iter_{k:03d}_state.vtk"
        write_vtk(path, submesh, {"u": u_vertex}, {"partition": sub.labels[tris]},
                  title=f"iteration {k} state on the shape")
        paths.append(path)
    return paths


# -- commands -----------------------------------------------------------------

def cmd_optimize(config_path) -> int:
    doc = load_config(config_path, OPTIMIZE_SCHEMA)
    config = optimizer_config(doc)
    out_opts = doc.get("output", {})
    out = output_directory(out_opts.get("directory", f"{config.problem}_run"))
    want_vtk = out_opts.get("vtk", True)
    every = out_opts.get("vtk_every", 1)

    def on_iteration(k, it, V, fine_grad):
        if want_vtk and k % every == 0:
            write_iteration_vtk(out, k, it, fine_grad)

    opt = ShapeOptimizer(config)
    history = opt.run(on_iteration)
    if want_vtk and history.records and getattr(opt, "final_iterate", None) is not None:
        write_iteration_vtk(out, len(history.records), opt.final_iterate, None)
    if out_opts.get("csv", True):
        history.write_csv(out / "history.csv")
    summary = {"stop_reason": history.stop_reason, "iterations": len(history),
               "final_J": history.final_J, "final_t": history.final_t,
               "final_distance": history.final_distance, "components": history.final_components,
               "holes": history.final_holes, "output": str(out)}
    print(json.dumps(summary))
    return EXIT_DEGENERATE if history.stop_reason.startswith("degenerate") else EXIT_OK


def _fmt(value: float) -> str:
    return "" if value is None or math.isnan(value) else f"{value:.6g}"


def cmd_convergence_table(config_path, stream=None) -> int:
    doc = load_config(config_path, TABLE_SCHEMA)
    kw = dict(doc)
    if "levels" in kw:
        kw["levels"] = tuple(kw["levels"])
    if "degrees" in kw:
        kw["degrees"] = tuple(kw["degrees"])
    rows = convergence_table(**kw)
    writer = csv.writer(stream or sys.stdout, lineterminator="\r\n")
    writer.writerow(["i", "N", "err_l", "rate_l", "err_q", "rate_q"])
    for r in rows:
        writer.writerow([r.i, r.N, _fmt(r.err_l), _fmt(r.rate_l), _fmt(r.err_q), _fmt(r.rate_q)])
    return EXIT_OK


def cmd_export_mesh(config_path) -> int:
    doc = load_config(config_path, EXPORT_SCHEMA)
    base = build_base_mesh(doc["mesh"])
    name = doc.get("name", "mesh")
    out = output_directory(doc.get("output", {}).get("directory", "meshes"))
    formats = doc.get("formats", ["text", "vtk"])
    mesh, cell = base, {}
    if "initial" in doc:
        phi = INITIAL_LEVEL_SETS[doc["initial"]]
        mesh = refine_to_fit(base, phi(base.vertices))
        cell["sign"] = mesh.sign.astype(np.int64)
        if "polytopes" in doc:
            cell["partition"] = agglomerate_total(mesh, doc["polytopes"], doc.get("seed", 0)).labels
    written = []
    if "text" in formats:
        written.append(out / f"{name}.mesh")
        write_mesh_text(mesh, written[-1])
    if "vtk" in formats:
        written.append(out / f"{name}.vtk")
        write_vtk(written[-1], mesh, None, cell, title=name)
    print(json.dumps({"triangles": mesh.n_triangles, "vertices": mesh.n_vertices,
                      "files": [str(p) for p in written]}))
    return EXIT_OK


COMMANDS = {"optimize": cmd_optimize, "convergence-table": cmd_convergence_table,
            "export-mesh": cmd_export_mesh}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polydg-shape", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log every iteration")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="JSON config file, or the name of a bundled config")
    return parser


def resolve_config(arg: str) -> Path:
    path = Path(arg)
    if path.exists():
        return path
    bundled = bundled_config(arg if arg.endswith(".json") else f"{arg}.json")
    if bundled.exists():
        return bundled
    raise FileNotFoundError(f"config {arg!r} not found")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](resolve_config(args.config))
    except ConfigError as exc:
        for msg in exc.messages:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # noqa: BLE001 - reported as exit code 1
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
