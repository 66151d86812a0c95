"""Plain-text mesh exchange format.

Layout (whitespace separated, ``#`` starts a comment line)::

    vertices <n>
    <x> <y>            n lines, written with 17 significant digits
    triangles <m>
    <i> <j> <k>        m lines, zero-based vertex indices

Coordinates are written with ``%.17g`` so that reading back reproduces the
vertex array bit for bit.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .simplicial import MeshError, SimplicialMesh


def write_mesh_text(mesh: SimplicialMesh, path) -> None:
    lines = [f"vertices {mesh.n_vertices}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines.append(f"triangles {mesh.n_triangles}")
    lines += [f"{a} {b} {c}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")


def _section(tokens: list[list[str]], pos: int, name: str, width: int):
    if pos >= len(tokens) or len(tokens[pos]) != 2 or tokens[pos][0] != name:
        raise MeshError(f"expected '{name} <count>' header")
    count = int(tokens[pos][1])
    rows = tokens[pos + 1:pos + 1 + count]
    if len(rows) != count or any(len(r) != width for r in rows):
        raise MeshError(f"section '{name}' is truncated or malformed")
    return rows, pos + 1 + count


def read_mesh_text(path) -> SimplicialMesh:
    tokens = [ln.split() for ln in Path(path).read_text().splitlines()]
    tokens = [t for t in tokens if t and not t[0].startswith("#")]
    vrows, pos = _section(tokens, 0, "vertices", 2)
    trows, pos = _section(tokens, pos, "triangles", 3)
    if pos != len(tokens):
        raise MeshError("trailing data after the triangle section")
    vertices = np.array([[float(x) for x in r] for r in vrows]).reshape(-1, 2)
    triangles = np.array([[int(i) for i in r] for r in trows], dtype=np.int64).reshape(-1, 3)
    return SimplicialMesh(vertices, triangles)
