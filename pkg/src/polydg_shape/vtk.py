"""Legacy ASCII VTK (version 2.0) unstructured-grid output for triangle meshes."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .mesh.simplicial import MeshError, SimplicialMesh

VTK_TRIANGLE = 5


def _format_array(name: str, values) -> list[str]:
    arr = np.asarray(values)
    if arr.ndim == 1:
        if np.issubdtype(arr.dtype, np.integer) or arr.dtype == bool:
            out = [f"SCALARS {name} int 1", "LOOKUP_TABLE default"]
            out += [str(int(v)) for v in arr]
        else:
            out = [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            out += [f"{float(v):.17g}" for v in arr]
        return out
    if arr.ndim == 2 and arr.shape[1] in (2, 3):
        vec = np.zeros((len(arr), 3))
        vec[:, :arr.shape[1]] = arr
        return [f"VECTORS {name} double"] + [f"{a:.17g} {b:.17g} {c:.17g}" for a, b, c in vec]
    raise ValueError(f"field {name!r} must be scalar or a 2/3-vector per entry")


def write_vtk(path, mesh: SimplicialMesh, point_data: dict | None = None,
              cell_data: dict | None = None, title: str = "polydg_shape") -> None:
    """Write ``mesh`` and named fields; output bytes depend only on the inputs."""
    point_data = point_data or {}
    cell_data = cell_data or {}
    nv, nt = mesh.n_vertices, mesh.n_triangles
    lines = ["# vtk DataFile Version 2.0", title.splitlines()[0][:255] if title else "polydg_shape",
             "ASCII", "DATASET UNSTRUCTURED_GRID", f"POINTS {nv} double"]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.vertices]
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {nt}")
    lines += [str(VTK_TRIANGLE)] * nt
    for header, count, fields in (("CELL_DATA", nt, cell_data), ("POINT_DATA", nv, point_data)):
        if not fields:
            continue
        lines.append(f"{header} {count}")
        for name, values in fields.items():
            if len(values) != count:
                raise ValueError(f"{header.lower()} field {name!r} has {len(values)} entries, expected {count}")
            if any(ch.isspace() for ch in name):
                raise ValueError(f"field name {name!r} contains whitespace")
            lines += _format_array(name, values)
    Path(path).write_text("\n".join(lines) + "\n")


def read_vtk_mesh(path) -> SimplicialMesh:
    """Geometry of a triangle unstructured grid written by :func:`write_vtk`."""
    tokens = Path(path).read_text().split("\n")
    it = iter(tokens)
    points = cells = None
    for line in it:
        head = line.split()
        if not head:
            continue
        if head[0] == "POINTS":
            n = int(head[1])
            points = np.array([[float(v) for v in next(it).split()[:2]] for _ in range(n)]).reshape(-1, 2)
        elif head[0] == "CELLS":
            m = int(head[1])
            rows = [next(it).split() for _ in range(m)]
            if any(r[0] != "3" for r in rows):
                raise MeshError("only triangle cells are supported")
            cells = np.array([[int(v) for v in r[1:4]] for r in rows], dtype=np.int64).reshape(-1, 3)
    if points is None or cells is None:
        raise MeshError("file has no POINTS or CELLS section")
    return SimplicialMesh(points, cells)
