"""Triangle meshes with edge adjacency."""
from __future__ import annotations

from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


class MeshError(ValueError):
    pass


def signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = vertices[triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


class SimplicialMesh:
    """Conforming triangulation of a planar domain.

    Triangles are stored counter-clockwise. Local edge ``k`` of a triangle
    joins local vertices ``k`` and ``(k + 1) % 3``. Edges are stored as sorted
    vertex pairs; ``edge_tris[e, 1] == -1`` marks a boundary edge.

    ``parent`` optionally maps every triangle to a triangle of a coarser mesh
    it was cut from.
    """

    def __init__(self, vertices, triangles, parent=None):
        vertices = np.array(vertices, dtype=float).reshape(-1, 2)
        triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise MeshError("triangle refers to a missing vertex")
        area = signed_areas(vertices, triangles)
        scale = max(np.ptp(vertices, axis=0).max() if len(vertices) else 1.0, 1e-300)
        if np.any(np.abs(area) <= 1e-14 * scale**2):
            raise MeshError("mesh contains zero-area triangles")
        flip = area < 0
        if np.any(flip):
            triangles = triangles.copy()
            triangles[flip] = triangles[flip][:, [0, 2, 1]]
        self.vertices = vertices
        self.triangles = triangles
        self.parent = None if parent is None else np.asarray(parent, dtype=np.int64)
        for arr in (self.vertices, self.triangles):
            arr.setflags(write=False)
        self._build_edges()

    def _build_edges(self):
        t = self.triangles
        nt = len(t)
        local = np.stack([t, np.roll(t, -1, axis=1)], axis=2).reshape(-1, 2)
        key = np.sort(local, axis=1)
        edges, inverse = np.unique(key, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        ne = len(edges)
        edge_tris = -np.ones((ne, 2), dtype=np.int64)
        owner = np.repeat(np.arange(nt), 3)
        counts = np.bincount(inverse, minlength=ne)
        if np.any(counts > 2):
            raise MeshError("non-manifold edge shared by more than two triangles")
        order = np.argsort(inverse, kind="stable")
        inv_sorted = inverse[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = inv_sorted[1:] != inv_sorted[:-1]
        edge_tris[inv_sorted[first], 0] = owner[order[first]]
        edge_tris[inv_sorted[~first], 1] = owner[order[~first]]
        self.edges = edges
        self.edge_tris = edge_tris
        self.tri_edges = inverse.reshape(nt, 3)
        self.boundary_edge = edge_tris[:, 1] < 0
        bv = np.zeros(len(self.vertices), dtype=bool)
        bv[edges[self.boundary_edge].ravel()] = True
        self.boundary_vertex = bv

    # -- geometry -----------------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def coords(self) -> np.ndarray:
        """Vertex coordinates per triangle, shape (nt, 3, 2)."""
        return self.vertices[self.triangles]

    @cached_property
    def areas(self) -> np.ndarray:
        return signed_areas(self.vertices, self.triangles)

    @cached_property
    def barycenters(self) -> np.ndarray:
        return self.coords.mean(axis=1)

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @cached_property
    def diameters(self) -> np.ndarray:
        return self.edge_lengths[self.tri_edges].max(axis=1)

    @cached_property
    def edge_midpoints(self) -> np.ndarray:
        return 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])

    def edge_normals(self) -> np.ndarray:
        """Unit normals of every edge pointing out of ``edge_tris[:, 0]``."""
        p0 = self.vertices[self.edges[:, 0]]
        d = self.vertices[self.edges[:, 1]] - p0
        n = np.column_stack([d[:, 1], -d[:, 0]]) / self.edge_lengths[:, None]
        inside = self.barycenters[self.edge_tris[:, 0]] - p0
        flip = np.einsum("ij,ij->i", n, inside) > 0
        n[flip] *= -1.0
        return n

    # -- topology -----------------------------------------------------------
    def triangle_adjacency(self, mask=None):
        """Sparse symmetric edge-adjacency graph of triangles."""
        interior = ~self.boundary_edge
        a, b = self.edge_tris[interior, 0], self.edge_tris[interior, 1]
        if mask is not None:
            keep = mask[a] & mask[b]
            a, b = a[keep], b[keep]
        nt = self.n_triangles
        data = np.ones(2 * len(a))
        return coo_matrix((data, (np.r_[a, b], np.r_[b, a])), shape=(nt, nt)).tocsr()

    def connected_component_count(self, mask) -> int:
        """Number of edge-connected components among triangles where ``mask``."""
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            return 0
        _, labels = connected_components(self.triangle_adjacency(mask), directed=False)
        return len(np.unique(labels[mask]))

    def total_area(self) -> float:
        return float(self.areas.sum())

    def with_vertices(self, vertices) -> "SimplicialMesh":
        """Same connectivity, moved vertices (raises on tangled triangles)."""
        area = signed_areas(np.asarray(vertices, float), self.triangles)
        if np.any(area <= 0):
            raise MeshError("moved mesh is tangled (non-positive triangle area)")
        return SimplicialMesh(vertices, self.triangles, parent=self.parent)

    def __repr__(self):
        return f"{type(self).__name__}(nv={self.n_vertices}, nt={self.n_triangles})"
