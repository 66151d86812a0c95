"""Structured triangulations of the two hold-all domains."""
from __future__ import annotations

import numpy as np

from .simplicial import SimplicialMesh


def square_mesh(n: int, half_width: float = 1.0) -> SimplicialMesh:
    """``n`` x ``n`` cells on [-h, h]^2, two triangles per cell (2 n^2 total).

    Diagonals alternate in a checkerboard pattern so the mesh has no
    preferred direction.
    """
    if n < 1:
        raise ValueError("n must be positive")
    x = np.linspace(-half_width, half_width, n + 1)
    X, Y = np.meshgrid(x, x, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    i, j = i.ravel(), j.ravel()
    v00 = j * (n + 1) + i
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    even = (i + j) % 2 == 0
    t1 = np.where(even[:, None], np.column_stack([v00, v10, v11]), np.column_stack([v00, v10, v01]))
    t2 = np.where(even[:, None], np.column_stack([v00, v11, v01]), np.column_stack([v10, v11, v01]))
    tris = np.empty((2 * n * n, 3), dtype=np.int64)
    tris[0::2] = t1
    tris[1::2] = t2
    return SimplicialMesh(verts, tris)


def _ring_counts(n_rings: int, scale: float) -> list[int]:
    return [max(6, int(round(2.0 * np.pi * k * scale))) for k in range(1, n_rings + 1)]


def _ring_triangle_count(counts: list[int]) -> int:
    return 2 * sum(counts) - counts[-1]


def disc_mesh(n_rings: int = 18, radius: float = 1.0, target_triangles: int | None = None,
              ring_counts: list[int] | None = None) -> SimplicialMesh:
    """Concentric-ring triangulation of the disc of given radius.

    Ring ``k`` carries about ``2 pi k`` equally spaced points; consecutive
    rings are stitched by an angular sweep. With ``target_triangles`` the
    per-ring point counts are scaled (and the last ring adjusted) to hit the
    requested triangle count exactly, when possible.
    """
    if ring_counts is None:
        ring_counts = _ring_counts(n_rings, 1.0)
        if target_triangles is not None:
            ring_counts = _fit_counts(n_rings, target_triangles)
    n_rings = len(ring_counts)
    verts = [np.zeros((1, 2))]
    angles = [np.zeros(1)]
    for k, m in enumerate(ring_counts, start=1):
        theta = 2.0 * np.pi * (np.arange(m) + 0.5 * (k % 2)) / m
        r = radius * k / n_rings
        verts.append(np.column_stack([r * np.cos(theta), r * np.sin(theta)]))
        angles.append(theta)
    offsets = np.cumsum([0] + [len(a) for a in angles])
    tris = []
    m1 = ring_counts[0]
    for a in range(m1):
        tris.append((0, 1 + a, 1 + (a + 1) % m1))
    for k in range(2, n_rings + 1):
        inner_off, outer_off = offsets[k - 1], offsets[k]
        ti, to = angles[k - 1], angles[k]
        mi, mo = len(ti), len(to)
        # Sweep both rings in angle, starting at the smallest angle of each.
        i = j = 0
        ai = lambda q: ti[q % mi] + 2.0 * np.pi * (q // mi)
        ao = lambda q: to[q % mo] + 2.0 * np.pi * (q // mo)
        while i < mi or j < mo:
            if j >= mo or (i < mi and ai(i + 1) < ao(j + 1)):
                tris.append((inner_off + i % mi, outer_off + j % mo, inner_off + (i + 1) % mi))
                i += 1
            else:
                tris.append((inner_off + i % mi, outer_off + j % mo, outer_off + (j + 1) % mo))
                j += 1
    return SimplicialMesh(np.vstack(verts), np.array(tris))


def _fit_counts(n_rings: int, target: int) -> list[int]:
    best = None
    for scale in np.linspace(0.7, 1.4, 7001):
        counts = _ring_counts(n_rings, scale)
        for adjust in (0, 1, -1):
            c = counts[:-1] + [counts[-1] + adjust]
            diff = abs(_ring_triangle_count(c) - target)
            if best is None or diff < best[0]:
                best = (diff, c)
            if diff == 0:
                return c
    return best[1]
