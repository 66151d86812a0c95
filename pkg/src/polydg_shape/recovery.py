"""Continuous Lagrange fields and nodal-averaging recovery of dG fields."""
from __future__ import annotations

from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .dg.bases import triangle_orthonormal
from .dg.quadrature import reference_triangle_rule
from .dg.space import DgField, LegendreBoxSpace, TriangleSpace
from .mesh.simplicial import MeshError, SimplicialMesh

# Local Lagrange nodes on the reference triangle: vertices, then midpoints of
# the local edges (0,1), (1,2), (2,0).
REFERENCE_NODES = {
    1: np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
    2: np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]]),
}


def lagrange_shape(degree: int, ref: np.ndarray):
    """Lagrange shape functions (n, nloc) and reference gradients (n, nloc, 2)."""
    x, y = ref[:, 0], ref[:, 1]
    l0, l1, l2 = 1.0 - x - y, x, y
    dl = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    if degree == 1:
        val = np.stack([l0, l1, l2], axis=1)
        grad = np.broadcast_to(dl, (len(x), 3, 2)).copy()
        return val, grad
    if degree != 2:
        raise ValueError("only degrees 1 and 2 are supported")
    lam = [l0, l1, l2]
    val = [lam[i] * (2 * lam[i] - 1) for i in range(3)]
    val += [4 * lam[i] * lam[(i + 1) % 3] for i in range(3)]
    grad = [(4 * lam[i] - 1)[:, None] * dl[i] for i in range(3)]
    grad += [4 * (lam[(i + 1) % 3][:, None] * dl[i] + lam[i][:, None] * dl[(i + 1) % 3]) for i in range(3)]
    return np.stack(val, axis=1), np.stack(grad, axis=1)


class ContinuousField:
    """Globally continuous piecewise-polynomial field given by Lagrange node values.

    Nodes are the mesh vertices followed (degree 2) by the edge midpoints.
    ``values`` has shape (n_nodes,) or (n_nodes, ncomp).
    """

    def __init__(self, mesh: SimplicialMesh, degree: int, values):
        if degree not in (1, 2):
            raise ValueError("Lagrange degree must be 1 or 2")
        values = np.asarray(values, dtype=float)
        n_nodes = mesh.n_vertices + (mesh.n_edges if degree == 2 else 0)
        if values.shape[0] != n_nodes:
            raise ValueError(f"expected {n_nodes} nodal values, got {values.shape[0]}")
        self.mesh = mesh
        self.degree = degree
        self.values = values

    @classmethod
    def interpolate(cls, mesh: SimplicialMesh, degree: int, func) -> "ContinuousField":
        nodes = node_coordinates(mesh, degree)
        return cls(mesh, degree, np.asarray(func(nodes), dtype=float))

    @property
    def n_nodes(self) -> int:
        return len(self.values)

    def vertex_values(self) -> np.ndarray:
        return self.values[: self.mesh.n_vertices]

    @cached_property
    def local_nodes(self) -> np.ndarray:
        return local_node_ids(self.mesh, self.degree)

    def boundary_nodes(self) -> np.ndarray:
        return boundary_node_mask(self.mesh, self.degree)

    def _ref_coords(self, triangles, points):
        c = self.mesh.coords[triangles]
        jac = np.stack([c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]], axis=2)
        inv = np.linalg.inv(jac)
        return np.einsum("nij,nj->ni", inv, points - c[:, 0]), inv

    def locate(self, points, candidates: int = 12) -> np.ndarray:
        """Triangle containing each point (nearest-barycentre search).

        Points not resolved among the ``candidates`` nearest barycentres
        (thin slivers next to a fitted interface) are retried with a
        growing candidate set.
        """
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        out = -np.ones(len(points), dtype=np.int64)
        best = np.full(len(points), -np.inf)
        todo = np.arange(len(points))
        k = min(candidates, self.mesh.n_triangles)
        while True:
            _, idx = self._tree.query(points[todo], k=k)
            idx = idx.reshape(len(todo), k)
            for j in range(k):
                ref, _ = self._ref_coords(idx[:, j], points[todo])
                score = np.column_stack([1 - ref.sum(axis=1), ref]).min(axis=1)
                better = score > best[todo]
                out[todo[better]] = idx[better, j]
                best[todo[better]] = score[better]
            todo = todo[best[todo] < -1e-8]
            if len(todo) == 0 or k == self.mesh.n_triangles:
                break
            k = min(8 * k, self.mesh.n_triangles)
        if len(todo):
            raise MeshError("point outside the mesh")
        return out

    @cached_property
    def _tree(self):
        return cKDTree(self.mesh.barycenters)

    def _resolve(self, points, triangles):
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        if triangles is None:
            return points, self.locate(points)
        triangles = np.broadcast_to(np.asarray(triangles, dtype=np.int64), (len(points),))
        return points, triangles

    def evaluate(self, points, triangles=None) -> np.ndarray:
        points, triangles = self._resolve(points, triangles)
        ref, _ = self._ref_coords(triangles, points)
        val, _ = lagrange_shape(self.degree, ref)
        return np.einsum("nk,nk...->n...", val, self.values[self.local_nodes[triangles]])

    def gradient(self, points, triangles=None) -> np.ndarray:
        points, triangles = self._resolve(points, triangles)
        ref, inv = self._ref_coords(triangles, points)
        _, gref = lagrange_shape(self.degree, ref)
        grad = np.einsum("nkr,nrs->nks", gref, inv)
        return np.einsum("nks,nk...->n...s", grad, self.values[self.local_nodes[triangles]])

    def to_dg(self, space: TriangleSpace | None = None) -> DgField:
        """Exact re-expansion in the orthonormal triangle basis."""
        space = space or TriangleSpace(self.mesh, self.degree)
        if space.degree < self.degree:
            raise ValueError("target space degree too low for exact representation")
        rule = reference_triangle_rule(2 * space.degree)
        lag, _ = lagrange_shape(self.degree, rule.points)
        ortho, _ = triangle_orthonormal(space.degree, rule.points)
        # c_k = int_ref psi_k f  (orthonormal on the reference triangle)
        proj = (ortho * rule.weights[:, None]).T @ lag  # (k, nloc)
        coeffs = np.einsum("kl,tl...->tk...", proj, self.values[self.local_nodes])
        return DgField(space, coeffs)


def node_coordinates(mesh: SimplicialMesh, degree: int) -> np.ndarray:
    if degree == 1:
        return mesh.vertices
    return np.vstack([mesh.vertices, mesh.edge_midpoints])


def local_node_ids(mesh: SimplicialMesh, degree: int) -> np.ndarray:
    if degree == 1:
        return mesh.triangles
    return np.hstack([mesh.triangles, mesh.n_vertices + mesh.tri_edges])


def boundary_node_mask(mesh: SimplicialMesh, degree: int) -> np.ndarray:
    if degree == 1:
        return mesh.boundary_vertex.copy()
    return np.concatenate([mesh.boundary_vertex, mesh.boundary_edge])


def inject_polytopic_to_simplicial(field: DgField) -> DgField:
    """Restrict each polytope's polynomial to its fine triangles.

    A tensor polynomial of degree ``p`` per coordinate has total degree
    ``2p``, so the target triangle space has degree ``2p`` and the
    re-expansion is exact. Triangles outside the polytopic mesh get zero.
    """
    space = field.space
    if not isinstance(space, LegendreBoxSpace):
        raise MeshError("injection expects a field on a polytopic mesh")
    fine = space.mesh.fine
    target = TriangleSpace(fine, 2 * space.degree)
    _, ortho, _, wts, pts = target.reference_tables(4 * space.degree)
    labels = space.mesh.labels
    tri = np.flatnonzero(labels >= 0)
    nq = pts.shape[1]
    vals = field.evaluate(np.repeat(labels[tri], nq), pts[tri].reshape(-1, 2))
    vals = vals.reshape((len(tri), nq) + vals.shape[1:])
    rule = reference_triangle_rule(4 * space.degree)
    coeffs = np.zeros((fine.n_triangles, target.n_local) + vals.shape[2:])
    coeffs[tri] = np.einsum("q,qk,tq...->tk...", rule.weights, ortho, vals)
    return DgField(target, coeffs)


def recover_nodal_average(field: DgField, degree: int | None = None,
                          zero_boundary: bool = True) -> ContinuousField:
    """Average one-sided limits at every Lagrange node of the triangle mesh.

    Nodes on the hold-all boundary are set to zero unless ``zero_boundary``
    is off (used for level-set functions, which must keep their sign there).
    """
    space = field.space
    if not isinstance(space, TriangleSpace):
        raise MeshError("recovery works on fields over a triangle mesh")
    if degree is None:
        degree = space.degree
    mesh = space.mesh
    ref = REFERENCE_NODES[degree]
    ortho, _ = triangle_orthonormal(space.degree, ref)
    local = np.einsum("lk,tk...->tl...", ortho, field.coeffs)  # (nt, nloc, ...)
    ids = local_node_ids(mesh, degree)
    n_nodes = mesh.n_vertices + (mesh.n_edges if degree == 2 else 0)
    counts = np.bincount(ids.ravel(), minlength=n_nodes).astype(float)
    flat = local.reshape((-1,) + local.shape[2:])
    sums = np.zeros((n_nodes,) + local.shape[2:])
    np.add.at(sums, ids.ravel(), flat)
    values = sums / np.maximum(counts, 1.0).reshape((-1,) + (1,) * (sums.ndim - 1))
    if zero_boundary:
        values[boundary_node_mask(mesh, degree)] = 0.0
    return ContinuousField(mesh, degree, values)
