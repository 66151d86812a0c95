"""Broken polynomial spaces, fields, and element-wise L2 projection."""
from __future__ import annotations

from functools import cached_property

import numpy as np

from ..mesh.polytopic import PolytopicMesh
from ..mesh.simplicial import SimplicialMesh
from .bases import box_legendre, triangle_dim, triangle_orthonormal
from .quadrature import map_triangle_rule, reference_triangle_rule


class DgSpace:
    """Common interface of the broken spaces.

    Subclasses provide ``n_elements``, ``n_local`` and ``eval_basis``.
    Degrees of freedom are numbered element by element.
    """

    degree: int
    n_local: int
    n_elements: int

    @property
    def ndofs(self) -> int:
        return self.n_elements * self.n_local

    def dofs(self, element) -> np.ndarray:
        return np.asarray(element)[..., None] * self.n_local + np.arange(self.n_local)

    def eval_basis(self, elements, points):  # pragma: no cover - interface
        raise NotImplementedError

    def element_quadrature(self, degree: int | None = None, elements=None):
        raise NotImplementedError

    @property
    def quadrature_degree(self) -> int:
        """Default rule degree: exact for mass matrices, never below 4."""
        return max(4, 2 * self.max_total_degree)

    def zero_field(self, ncomp: int | None = None) -> "DgField":
        shape = (self.n_elements, self.n_local) + (() if ncomp is None else (ncomp,))
        return DgField(self, np.zeros(shape))

    def mass_blocks(self, degree: int | None = None) -> np.ndarray:
        pts, wts, el = self.element_quadrature(degree or self.quadrature_degree)
        val, _ = self.eval_basis(el, pts)
        blocks = np.zeros((self.n_elements, self.n_local, self.n_local))
        np.add.at(blocks, el, wts[:, None, None] * val[:, :, None] * val[:, None, :])
        return blocks


class LegendreBoxSpace(DgSpace):
    """Tensor-product Legendre polynomials of degree ``p`` per coordinate,
    defined on each element's bounding box and restricted to the element."""

    def __init__(self, mesh: PolytopicMesh, p: int):
        if p < 0:
            raise ValueError("degree must be non-negative")
        self.mesh = mesh
        self.degree = p
        self.n_local = (p + 1) ** 2
        self.n_elements = mesh.n_elements
        self.max_total_degree = 2 * p

    def eval_basis(self, elements, points):
        elements = np.asarray(elements, dtype=np.int64)
        if elements.size and (elements.min() < 0 or elements.max() >= self.n_elements):
            raise IndexError("element id out of range")
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        elements = np.broadcast_to(elements, (len(points),))
        return box_legendre(self.degree, points, self.mesh.box_lo[elements], self.mesh.box_hi[elements])

    def element_quadrature(self, degree: int | None = None, elements=None):
        """Composite rule: the triangle rule on every fine triangle of each element.

        Returns points (m, 2), weights (m,), owning element ids (m,).
        """
        degree = degree or self.quadrature_degree
        fine = self.mesh.fine
        tri = self.mesh.element_triangles_flat
        if elements is not None:
            keep = np.isin(self.mesh.labels[tri], np.asarray(elements))
            tri = tri[keep]
        pts, wts = map_triangle_rule(fine.coords[tri], degree)
        el = np.repeat(self.mesh.labels[tri], pts.shape[1])
        return pts.reshape(-1, 2), wts.ravel(), el


class TriangleSpace(DgSpace):
    """Orthonormal (Dubiner-type) basis of P_p on every triangle of a mesh."""

    def __init__(self, mesh: SimplicialMesh, p: int):
        if p < 0:
            raise ValueError("degree must be non-negative")
        self.mesh = mesh
        self.degree = p
        self.n_local = triangle_dim(p)
        self.n_elements = mesh.n_triangles
        self.max_total_degree = p

    @cached_property
    def _affine(self):
        c = self.mesh.coords
        jac = np.stack([c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]], axis=2)  # columns e1, e2
        return c[:, 0], jac, np.linalg.inv(jac), np.abs(np.linalg.det(jac))

    def to_reference(self, elements, points):
        origin, _, inv, _ = self._affine
        elements = np.broadcast_to(np.asarray(elements, dtype=np.int64), (len(points),))
        return np.einsum("nij,nj->ni", inv[elements], points - origin[elements])

    def eval_basis(self, elements, points):
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        elements = np.broadcast_to(np.asarray(elements, dtype=np.int64), (len(points),))
        if elements.size and (elements.min() < 0 or elements.max() >= self.n_elements):
            raise IndexError("element id out of range")
        ref = self.to_reference(elements, points)
        val, gref = triangle_orthonormal(self.degree, ref)
        inv = self._affine[2][elements]
        return val, np.einsum("nkr,nrs->nks", gref, inv)

    def reference_tables(self, degree: int):
        """Reference rule with basis tables shared by all triangles.

        Returns ref points (nq, 2), values (nq, k), physical gradients
        (nt, nq, k, 2), weights (nt, nq) and physical points (nt, nq, 2).
        """
        rule = reference_triangle_rule(degree)
        val, gref = triangle_orthonormal(self.degree, rule.points)
        origin, jac, inv, det = self._affine
        grads = np.einsum("qkr,trs->tqks", gref, inv)
        wts = det[:, None] * rule.weights[None, :]
        pts = origin[:, None, :] + np.einsum("tij,qj->tqi", jac, rule.points)
        return rule.points, val, grads, wts, pts

    def element_quadrature(self, degree: int | None = None, elements=None):
        degree = degree or self.quadrature_degree
        tri = np.arange(self.n_elements) if elements is None else np.asarray(elements)
        pts, wts = map_triangle_rule(self.mesh.coords[tri], degree)
        return pts.reshape(-1, 2), wts.ravel(), np.repeat(tri, pts.shape[1])

    def mass_diagonal(self) -> np.ndarray:
        """Mass matrices are ``det(J) * I`` for the orthonormal basis."""
        return np.repeat(self._affine[3], self.n_local)


class DgField:
    """Coefficients (n_elements, n_local[, ncomp]) over a broken space."""

    def __init__(self, space: DgSpace, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[:2] != (space.n_elements, space.n_local):
            if coeffs.ndim == 1 and coeffs.size == space.ndofs:
                coeffs = coeffs.reshape(space.n_elements, space.n_local)
            else:
                raise ValueError("coefficient array does not match the space dimension")
        self.space = space
        self.coeffs = coeffs

    @property
    def vector(self) -> np.ndarray:
        return self.coeffs.reshape(self.space.ndofs, *self.coeffs.shape[2:])

    def evaluate(self, elements, points) -> np.ndarray:
        val, _ = self.space.eval_basis(elements, points)
        el = np.broadcast_to(np.asarray(elements), (len(val),))
        return np.einsum("nk,nk...->n...", val, self.coeffs[el])

    def gradient(self, elements, points) -> np.ndarray:
        _, grad = self.space.eval_basis(elements, points)
        el = np.broadcast_to(np.asarray(elements), (len(grad),))
        return np.einsum("nkd,nk...->n...d", grad, self.coeffs[el])

    def __add__(self, other):
        return DgField(self.space, self.coeffs + other.coeffs)

    def __mul__(self, scalar):
        return DgField(self.space, self.coeffs * scalar)

    __rmul__ = __mul__


class SingularMassError(np.linalg.LinAlgError):
    pass


def l2_project(func, space: DgSpace, region=None, degree: int | None = None) -> DgField:
    """Element-wise L2 projection of ``func(points) -> values``.

    ``region`` is an optional boolean mask over elements; elements outside
    get zero coefficients (the projection onto the restricted space).
    """
    degree = degree or space.quadrature_degree
    elements = None if region is None else np.flatnonzero(np.asarray(region, dtype=bool))
    pts, wts, el = space.element_quadrature(degree, elements)
    val, _ = space.eval_basis(el, pts)
    f = np.asarray(func(pts), dtype=float)
    extra = f.shape[1:]
    mass = np.zeros((space.n_elements, space.n_local, space.n_local))
    np.add.at(mass, el, wts[:, None, None] * val[:, :, None] * val[:, None, :])
    rhs = np.zeros((space.n_elements, space.n_local) + extra)
    np.add.at(rhs, el, np.einsum("n,nk,n...->nk...", wts, val, f))
    active = np.unique(el)
    coeffs = np.zeros_like(rhs)
    blocks = mass[active]
    scale = np.abs(blocks[:, np.arange(space.n_local), np.arange(space.n_local)]).max(axis=1)
    cond = np.linalg.cond(blocks)
    if np.any(~np.isfinite(cond)) or np.any(cond > 1e14) or np.any(scale == 0):
        raise SingularMassError("singular local mass matrix (degenerate element)")
    coeffs[active] = np.linalg.solve(blocks, rhs[active].reshape(len(active), space.n_local, -1)).reshape(
        rhs[active].shape)
    return DgField(space, coeffs)
