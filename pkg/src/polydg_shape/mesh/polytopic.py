"""Agglomerated polygonal meshes built on top of a fine triangulation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull

from .simplicial import MeshError, SimplicialMesh

INTERIOR, FIXED, FREE = 0, 1, 2


@dataclass(frozen=True)
class BoundingBox:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        if np.any(self.hi - self.lo <= 0):
            raise MeshError("bounding box must have positive extents")

    @property
    def extent(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.hi + self.lo)

    def contains(self, points, tol=1e-12) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.all((pts >= self.lo - tol) & (pts <= self.hi + tol), axis=1)


@dataclass(frozen=True)
class Faces:
    """Straight faces of a polytopic mesh.

    ``elements[:, 1] == -1`` marks boundary faces; ``normals`` point out of
    ``elements[:, 0]``. ``tags`` is INTERIOR, FIXED (hold-all boundary) or
    FREE (boundary created by cutting out a sub-region).
    ``interface_lengths`` is the length of the whole (possibly bent)
    interface between the same two elements, or of the element's boundary
    part with the same tag; it is the ``|e|`` entering the penalty.
    """

    p0: np.ndarray
    p1: np.ndarray
    elements: np.ndarray
    normals: np.ndarray
    lengths: np.ndarray
    tags: np.ndarray
    interface_lengths: np.ndarray | None = None

    def __len__(self):
        return len(self.lengths)

    @property
    def interior(self) -> np.ndarray:
        return self.elements[:, 1] >= 0

    @property
    def boundary(self) -> np.ndarray:
        return self.elements[:, 1] < 0


class PolytopicMesh:
    """Partition of (part of) a fine triangulation into agglomerates.

    ``labels[t]`` is the element owning fine triangle ``t`` or -1 when the
    triangle lies outside the meshed region.
    """

    def __init__(self, fine: SimplicialMesh, labels, element_sign=None, parent_element=None):
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (fine.n_triangles,):
            raise MeshError("need one label per fine triangle")
        used = labels[labels >= 0]
        if used.size == 0:
            raise MeshError("polytopic mesh has no elements")
        n_el = int(used.max()) + 1
        if len(np.unique(used)) != n_el:
            raise MeshError("element labels must be contiguous 0..n-1")
        self.fine = fine
        self.labels = labels
        self.n_elements = n_el
        self.element_sign = None if element_sign is None else np.asarray(element_sign, dtype=np.int8)
        self.parent_element = None if parent_element is None else np.asarray(parent_element, dtype=np.int64)

        tri_ids = np.flatnonzero(labels >= 0)
        order = np.argsort(labels[tri_ids], kind="stable")
        self.element_triangles_flat = tri_ids[order]
        counts = np.bincount(labels[tri_ids], minlength=n_el)
        self.element_offsets = np.concatenate([[0], np.cumsum(counts)])
        self.areas = np.bincount(labels[tri_ids], weights=fine.areas[tri_ids], minlength=n_el)

        corner = fine.coords[tri_ids]  # (m, 3, 2)
        el = np.repeat(labels[tri_ids], 3)
        pts = corner.reshape(-1, 2)
        lo = np.full((n_el, 2), np.inf)
        hi = np.full((n_el, 2), -np.inf)
        np.minimum.at(lo, el, pts)
        np.maximum.at(hi, el, pts)
        self.box_lo, self.box_hi = lo, hi
        self.diameters = self._diameters()
        self.faces = self._build_faces()

    # -- element data -------------------------------------------------------
    def element_triangles(self, element: int) -> np.ndarray:
        self._check(element)
        return self.element_triangles_flat[self.element_offsets[element]:self.element_offsets[element + 1]]

    def bounding_box(self, element: int) -> BoundingBox:
        self._check(element)
        return BoundingBox(self.box_lo[element].copy(), self.box_hi[element].copy())

    def _check(self, element):
        if not 0 <= element < self.n_elements:
            raise IndexError(f"element {element} out of range")

    def _diameters(self) -> np.ndarray:
        diam = np.empty(self.n_elements)
        tris = self.fine.triangles
        verts = self.fine.vertices
        for k in range(self.n_elements):
            ids = np.unique(tris[self.element_triangles(k)])
            p = verts[ids]
            if len(p) > 40:
                try:
                    p = p[ConvexHull(p).vertices]
                except Exception:
                    pass
            d = p[:, None, :] - p[None, :, :]
            diam[k] = np.sqrt((d**2).sum(-1).max())
        return diam

    # -- faces --------------------------------------------------------------
    def _build_faces(self) -> Faces:
        fine = self.fine
        lab = self.labels
        t0, t1 = fine.edge_tris[:, 0], fine.edge_tris[:, 1]
        l0 = lab[t0]
        l1 = np.where(t1 >= 0, lab[np.maximum(t1, 0)], -2)
        normals = fine.edge_normals()

        a = np.where(l0 >= 0, l0, l1)  # owning element for one-sided faces
        b = np.where(l0 >= 0, l1, l0)
        flip = l0 < 0
        keep = (a >= 0) & (a != b)
        b = np.where(b == -2, -1, b)
        tags = np.where(b >= 0, INTERIOR, np.where(l1 == -2, FIXED, FREE))
        n = np.where(flip[:, None], -normals, normals)
        # Interior faces: orient from the smaller element id.
        swap = (b >= 0) & (b < a)
        a, b = np.where(swap, b, a), np.where(swap, a, b)
        n = np.where(swap[:, None], -n, n)

        eid = np.flatnonzero(keep)
        return _merge_collinear(fine, eid, a[eid], b[eid], n[eid], tags[eid])

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def element_perimeters(self) -> np.ndarray:
        f = self.faces
        per = np.bincount(f.elements[:, 0], weights=f.lengths, minlength=self.n_elements)
        inner = f.interior
        per += np.bincount(f.elements[inner, 1], weights=f.lengths[inner], minlength=self.n_elements)
        return per

    def element_triangle_labels(self) -> np.ndarray:
        return self.labels

    def __repr__(self):
        return f"PolytopicMesh(n_elements={self.n_elements}, n_faces={self.n_faces})"


def _merge_collinear(fine, eid, ea, eb, normals, tags) -> Faces:
    """Join consecutive collinear fine edges separating the same element pair."""
    edges = fine.edges[eid]
    verts = fine.vertices
    key = np.stack([ea, eb, tags], axis=1)
    # union-find over fine edges
    parent = np.arange(len(eid))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    _, group = np.unique(key, axis=0, return_inverse=True)
    group = group.ravel()
    ends = np.concatenate([edges[:, 0], edges[:, 1]])
    owner = np.concatenate([np.arange(len(eid))] * 2)
    g2 = np.concatenate([group, group])
    order = np.lexsort((ends, g2))
    ends_s, g_s, own_s = ends[order], g2[order], owner[order]
    same = (ends_s[1:] == ends_s[:-1]) & (g_s[1:] == g_s[:-1])
    idx = np.flatnonzero(same)
    # vertices shared by exactly two edges of one group
    triple = np.zeros(len(ends_s), dtype=bool)
    if len(idx) > 1:
        consecutive = idx[1:] == idx[:-1] + 1
        triple[idx[1:][consecutive]] = True
        triple[idx[:-1][consecutive]] = True
    for i in idx:
        if triple[i]:
            continue
        e1, e2 = own_s[i], own_s[i + 1]
        n1, n2 = normals[e1], normals[e2]
        if abs(n1[0] * n2[1] - n1[1] * n2[0]) < 1e-10 and np.dot(n1, n2) > 0:
            r1, r2 = find(e1), find(e2)
            if r1 != r2:
                parent[r2] = r1
    roots = np.array([find(i) for i in range(len(eid))], dtype=np.int64)
    uniq, inv = np.unique(roots, return_inverse=True)
    inv = inv.ravel()
    nf = len(uniq)
    p0 = np.empty((nf, 2))
    p1 = np.empty((nf, 2))
    rep = uniq
    nrm = normals[rep]
    tangent = np.column_stack([-nrm[:, 1], nrm[:, 0]])
    base = verts[edges[rep, 0]]
    pa, pb = verts[edges[:, 0]], verts[edges[:, 1]]
    sa = np.einsum("ij,ij->i", pa - base[inv], tangent[inv])
    sb = np.einsum("ij,ij->i", pb - base[inv], tangent[inv])
    smin = np.full(nf, np.inf)
    smax = np.full(nf, -np.inf)
    np.minimum.at(smin, inv, np.minimum(sa, sb))
    np.maximum.at(smax, inv, np.maximum(sa, sb))
    p0 = base + smin[:, None] * tangent
    p1 = base + smax[:, None] * tangent
    lengths = np.bincount(inv, weights=fine.edge_lengths[eid], minlength=nf)
    face_elements = np.column_stack([ea[rep], eb[rep]])
    face_tags = tags[rep]
    # total length of the interface each face belongs to
    _, iface = np.unique(np.column_stack([face_elements, face_tags]), axis=0, return_inverse=True)
    iface = iface.ravel()
    iface_len = np.bincount(iface, weights=lengths)[iface]
    return Faces(p0=p0, p1=p1, elements=face_elements, normals=nrm, lengths=lengths,
                 tags=face_tags, interface_lengths=iface_len)
