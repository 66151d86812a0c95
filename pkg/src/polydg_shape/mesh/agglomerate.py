"""k-means agglomeration of fitted triangulations into polytopic meshes."""
from __future__ import annotations

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from sklearn.cluster import KMeans

from .polytopic import BoundingBox, PolytopicMesh
from .refine import FittedMesh
from .simplicial import MeshError, SimplicialMesh


def kmeans_labels(points: np.ndarray, k: int, seed: int, max_iter: int = 100) -> np.ndarray:
    """Lloyd iterations with k-means++ seeding; stops once assignments settle."""
    points = np.asarray(points, dtype=float)
    if k < 1 or k > len(points):
        raise MeshError(f"cannot form {k} clusters from {len(points)} points")
    if k == 1:
        return np.zeros(len(points), dtype=np.int64)
    km = KMeans(n_clusters=k, init="k-means++", n_init=1, max_iter=max_iter, tol=0.0,
                algorithm="lloyd", random_state=seed)
    return km.fit_predict(points).astype(np.int64)


def split_counts(n_pos: int, n_neg: int, total: int) -> tuple[int, int]:
    """Share ``total`` clusters between the sign classes proportionally."""
    if n_pos == 0 or n_neg == 0:
        return (min(total, n_pos), 0) if n_neg == 0 else (0, min(total, n_neg))
    if total < 2:
        raise MeshError("need at least one cluster per sign class")
    k_pos = int(round(total * n_pos / (n_pos + n_neg)))
    k_pos = min(max(k_pos, 1), n_pos, total - 1)
    k_neg = min(max(total - k_pos, 1), n_neg)
    return k_pos, k_neg


def _triangle_signs(mesh: SimplicialMesh, phi) -> np.ndarray:
    if isinstance(mesh, FittedMesh) and phi is None:
        return mesh.sign.astype(np.int64)
    if hasattr(phi, "evaluate"):
        vals = phi.evaluate(mesh.barycenters, mesh.parent if mesh.parent is not None
                            and phi.mesh is not mesh else None)
    else:
        vals = np.asarray(phi, dtype=float)
        if len(vals) == mesh.n_vertices:
            vals = vals[mesh.triangles].mean(axis=1)
    return np.where(vals < 0, -1, 1)


def agglomerate(mesh: SimplicialMesh, phi=None, k_plus: int = 1, k_minus: int = 1,
                seed: int = 0) -> PolytopicMesh:
    """Cluster barycenters per sign class and merge each cluster.

    Clusters that are not edge-connected are split into their connected
    components, so the element count can exceed ``k_plus + k_minus``;
    tiny fragments are merged into a same-sign neighbour instead.
    With ``phi=None`` on a fitted mesh the stored triangle signs are used.
    """
    sign = _triangle_signs(mesh, phi)
    bary = mesh.barycenters
    labels = -np.ones(mesh.n_triangles, dtype=np.int64)
    offset = 0
    for s, k in ((1, k_plus), (-1, k_minus)):
        ids = np.flatnonzero(sign == s)
        if k < 0:
            raise MeshError("cluster counts must be non-negative")
        if len(ids) == 0:
            if k >= 1:
                raise MeshError(f"no triangles with sign {s:+d} to form {k} clusters")
            continue
        if k == 0:
            raise MeshError(f"{len(ids)} triangles with sign {s:+d} but no clusters requested")
        lab = kmeans_labels(bary[ids], k, seed)
        labels[ids] = lab + offset
        offset += k
    labels = absorb_fragments(mesh, labels, sign)
    el_sign = np.zeros(labels.max() + 1, dtype=np.int8)
    el_sign[labels] = sign
    return PolytopicMesh(mesh, labels, element_sign=el_sign)


def split_disconnected(mesh: SimplicialMesh, labels: np.ndarray) -> np.ndarray:
    """Relabel so that every label is an edge-connected set of triangles."""
    adj = mesh.triangle_adjacency().tocoo()
    same = labels[adj.row] == labels[adj.col]
    g = coo_matrix((np.ones(same.sum()), (adj.row[same], adj.col[same])),
                   shape=adj.shape).tocsr()
    _, comp = connected_components(g, directed=False)
    valid = labels >= 0
    out = -np.ones_like(labels)
    # number components in order of (original label, first triangle)
    key_label = labels[valid]
    key_comp = comp[valid]
    pairs = np.stack([key_label, key_comp], axis=1)
    uniq, inv = np.unique(pairs, axis=0, return_inverse=True)
    out[valid] = inv.ravel()
    return out


def absorb_fragments(mesh: SimplicialMesh, labels: np.ndarray, sign: np.ndarray,
                     max_fraction: float = 1e-2) -> np.ndarray:
    """Split clusters into connected components, then merge tiny fragments.

    A component holding less than ``max_fraction`` of its cluster's area
    (never the largest one) joins the same-sign element across its longest
    shared edge. Such slivers otherwise get near-degenerate bounding boxes.
    """
    comp = split_disconnected(mesh, labels)
    n = comp.max() + 1
    area = np.bincount(comp, mesh.areas, minlength=n)
    parent = np.zeros(n, dtype=np.int64)
    parent[comp] = labels
    cluster_area = np.bincount(parent, area)
    largest = np.zeros(n, dtype=bool)
    order = np.lexsort((-area, parent))
    first = np.ones(n, dtype=bool)
    first[1:] = parent[order[1:]] != parent[order[:-1]]
    largest[order[first]] = True
    small = ~largest & (area < max_fraction * cluster_area[parent])
    if not small.any():
        return comp
    interior = ~mesh.boundary_edge
    ea, eb = mesh.edge_tris[interior, 0], mesh.edge_tris[interior, 1]
    elen = mesh.edge_lengths[interior]
    target = np.arange(n)
    for c in np.flatnonzero(small)[np.argsort(area[small], kind="stable")]:
        cur = target[comp]
        best, best_len = -1, 0.0
        for a, b in ((ea, eb), (eb, ea)):
            hit = (cur[a] == c) & (cur[b] != c) & (sign[b] == sign[a])
            if hit.any():
                shared = np.bincount(cur[b[hit]], elen[hit])
                k = int(np.argmax(shared))
                if shared[k] > best_len:
                    best, best_len = k, shared[k]
        if best >= 0:
            target[target == c] = best
    _, out = np.unique(target[comp], return_inverse=True)
    return out.ravel().astype(np.int64)


def agglomerate_total(mesh: FittedMesh, total: int, seed: int = 0) -> PolytopicMesh:
    """Agglomerate into about ``total`` elements split by sign-class size."""
    n_pos = int((mesh.sign > 0).sum())
    n_neg = int((mesh.sign < 0).sum())
    k_plus, k_minus = split_counts(n_pos, n_neg, total)
    return agglomerate(mesh, None, k_plus, k_minus, seed)


def bounding_box(poly: PolytopicMesh, element: int) -> BoundingBox:
    return poly.bounding_box(element)


def extract_interior_submesh(poly: PolytopicMesh, phi=None) -> PolytopicMesh:
    """Elements inside the shape {phi < 0} as a mesh of their own.

    Faces towards discarded elements become FREE boundary faces, faces on
    the hold-all boundary stay FIXED. ``parent_element`` maps back.
    """
    if phi is None:
        if poly.element_sign is None:
            raise MeshError("element signs unknown; pass phi")
        el_inside = poly.element_sign < 0
    else:
        tri_sign = _triangle_signs(poly.fine, phi)
        lab = poly.labels
        valid = lab >= 0
        pos = np.bincount(lab[valid], weights=(tri_sign[valid] > 0), minlength=poly.n_elements)
        el_inside = pos == 0
    if not el_inside.any():
        raise MeshError("the shape {phi < 0} is empty")
    new_id = -np.ones(poly.n_elements, dtype=np.int64)
    new_id[el_inside] = np.arange(el_inside.sum())
    labels = np.where(poly.labels >= 0, new_id[np.maximum(poly.labels, 0)], -1)
    sign = -np.ones(el_inside.sum(), dtype=np.int8)
    return PolytopicMesh(poly.fine, labels, element_sign=sign,
                         parent_element=np.flatnonzero(el_inside))
