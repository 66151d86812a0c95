"""Marking of cut triangles and local refinement fitting the zero-level set."""
from __future__ import annotations

import numpy as np

from .simplicial import MeshError, SimplicialMesh

SNAP_TOL = 1e-4


class FittedMesh(SimplicialMesh):
    """Triangulation whose edges resolve the piecewise-linear zero-level set.

    Extra per-vertex data: ``phi`` (level-set values, exactly 0 on the
    fitted interface) and ``interface`` flags; per triangle: ``sign``
    (+1 / -1) and ``parent`` (index of the triangle it was cut from).
    """

    def __init__(self, vertices, triangles, parent, phi, interface, sign):
        super().__init__(vertices, triangles, parent=parent)
        self.phi = np.asarray(phi, dtype=float)
        self.interface = np.asarray(interface, dtype=bool)
        self.sign = np.asarray(sign, dtype=np.int8)

    @property
    def inside(self) -> np.ndarray:
        """Triangles of the shape {phi < 0}."""
        return self.sign < 0

    def with_vertices(self, vertices) -> "FittedMesh":
        moved = SimplicialMesh.with_vertices(self, vertices)
        return FittedMesh(moved.vertices, moved.triangles, self.parent, self.phi,
                          self.interface, self.sign)

    def interface_points(self) -> np.ndarray:
        return self.vertices[self.interface]


def _nodal_values(mesh: SimplicialMesh, phi) -> np.ndarray:
    if hasattr(phi, "vertex_values"):
        if phi.mesh is not mesh and phi.mesh.n_vertices != mesh.n_vertices:
            raise MeshError("level-set field lives on a different mesh")
        return np.asarray(phi.vertex_values(), dtype=float)
    values = np.asarray(phi, dtype=float).ravel()
    if len(values) != mesh.n_vertices:
        raise MeshError("need one level-set value per vertex")
    return values


def vertex_signs(mesh: SimplicialMesh, phi_nodal) -> np.ndarray:
    """Sign per vertex; fitted-interface vertices get 0, other zeros count as +."""
    values = _nodal_values(mesh, phi_nodal)
    if not np.all(np.isfinite(values)):
        raise MeshError("level-set values must be finite")
    scale = np.abs(values).max() if len(values) else 0.0
    eps = 1e-12 * (scale if scale > 0 else 1.0)
    values = np.where(values == 0.0, eps, values)
    s = np.sign(values).astype(np.int8)
    if isinstance(mesh, FittedMesh):
        s[mesh.interface] = 0
    return s


def mark_cut_triangles(mesh: SimplicialMesh, phi_nodal) -> np.ndarray:
    """Indices of triangles whose vertex values change sign.

    On a plain mesh this is the test ``|s1 + s2 + s3| < 3``; vertices lying on
    an already fitted interface carry no sign and are ignored.
    """
    if np.any(mesh.areas <= 0):
        raise MeshError("mesh contains zero-area triangles")
    s = vertex_signs(mesh, phi_nodal)[mesh.triangles]
    has_pos = (s > 0).any(axis=1)
    has_neg = (s < 0).any(axis=1)
    return np.flatnonzero(has_pos & has_neg)


def _edge_roots(mesh, values, s):
    e = mesh.edges
    cut = (s[e[:, 0]] * s[e[:, 1]]) < 0
    v0, v1 = values[e[:, 0]], values[e[:, 1]]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(cut, v0 / (v0 - v1), np.nan)
    return cut, t


def refine_to_fit(mesh: SimplicialMesh, phi) -> FittedMesh:
    """Split cut triangles along the chord through the edge zeros of ``phi``.

    Zeros are the roots of the linear interpolant of the vertex values on
    each cut edge. Roots within ``SNAP_TOL`` (relative to the edge length) of
    an endpoint snap onto it. Every triangle containing a cut edge is split
    through the same new vertex, which keeps the output conforming.
    """
    values = _nodal_values(mesh, phi).copy()
    s = vertex_signs(mesh, values)
    interface = s == 0

    cut, t = _edge_roots(mesh, values, s)
    e = mesh.edges
    snap0 = cut & (t < SNAP_TOL)
    snap1 = cut & (t > 1.0 - SNAP_TOL)
    if snap0.any() or snap1.any():
        interface[e[snap0, 0]] = True
        interface[e[snap1, 1]] = True
        s = s.copy()
        s[interface] = 0
        cut, t = _edge_roots(mesh, values, s)
    values[interface] = 0.0

    nv = mesh.n_vertices
    cut_ids = np.flatnonzero(cut)
    new_index = -np.ones(mesh.n_edges, dtype=np.int64)
    new_index[cut_ids] = nv + np.arange(len(cut_ids))
    p0 = mesh.vertices[e[cut_ids, 0]]
    p1 = mesh.vertices[e[cut_ids, 1]]
    new_pts = p0 + t[cut_ids, None] * (p1 - p0)
    vertices = np.vstack([mesh.vertices, new_pts])
    phi_out = np.concatenate([values, np.zeros(len(cut_ids))])
    iface_out = np.concatenate([interface, np.ones(len(cut_ids), dtype=bool)])

    tris, parent = [], []
    tri_cut = cut[mesh.tri_edges]
    n_cut = tri_cut.sum(axis=1)
    keep = n_cut == 0
    tris.append(mesh.triangles[keep])
    parent.append(np.flatnonzero(keep))

    # One cut edge: the opposite vertex lies on the interface.
    for ti in np.flatnonzero(n_cut == 1):
        k = int(np.flatnonzero(tri_cut[ti])[0])
        v = mesh.triangles[ti]
        a, b, c = v[k], v[(k + 1) % 3], v[(k + 2) % 3]
        p = new_index[mesh.tri_edges[ti, k]]
        tris.append(np.array([[a, p, c], [p, b, c]]))
        parent.append(np.array([ti, ti]))

    # Two cut edges: the shared vertex is cut off, the rest is a quadrilateral.
    for ti in np.flatnonzero(n_cut == 2):
        k = int(np.flatnonzero(~tri_cut[ti])[0])  # uncut local edge (a, b)
        v = mesh.triangles[ti]
        a, b, o = v[k], v[(k + 1) % 3], v[(k + 2) % 3]
        q = new_index[mesh.tri_edges[ti, (k + 1) % 3]]  # on edge (b, o)
        p = new_index[mesh.tri_edges[ti, (k + 2) % 3]]  # on edge (o, a)
        sub = [[o, p, q]]
        if np.linalg.norm(vertices[p] - vertices[b]) <= np.linalg.norm(vertices[a] - vertices[q]):
            sub += [[p, a, b], [p, b, q]]
        else:
            sub += [[p, a, q], [a, b, q]]
        tris.append(np.array(sub))
        parent.append(np.full(3, ti))

    tris = np.vstack(tris)
    parent = np.concatenate(parent)
    order = np.argsort(parent, kind="stable")
    tris, parent = tris[order], parent[order]

    tri_phi = phi_out[tris]
    sign = np.sign(tri_phi.sum(axis=1)).astype(np.int8)
    undecided = sign == 0
    if undecided.any():
        sign[undecided] = _barycenter_sign(phi, mesh, vertices[tris[undecided]].mean(axis=1),
                                           parent[undecided])
    if mesh.parent is not None:
        parent = mesh.parent[parent]
    return FittedMesh(vertices, tris, parent, phi_out, iface_out, sign)


def _barycenter_sign(phi, mesh, points, parents):
    if hasattr(phi, "evaluate"):
        vals = phi.evaluate(points, parents)
        return np.where(vals < 0, -1, 1).astype(np.int8)
    return np.ones(len(points), dtype=np.int8)
