"""Symmetric interior-penalty dG for the shape-gradient and state equations."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .dg.faces import face_quadrature, penalty_sigma
from .dg.linalg import check_symmetric, solve_spd
from .dg.space import DgField, LegendreBoxSpace
from .mesh.polytopic import FIXED, FREE

DEFAULT_C_SIGMA = 10.0


@dataclass
class FaceTables:
    """Basis values on the quadrature points of a set of faces."""

    ids: np.ndarray
    points: np.ndarray  # (nf, nq, 2)
    weights: np.ndarray  # (nf, nq)
    normals: np.ndarray  # (nf, 2), out of side a
    a: np.ndarray
    b: np.ndarray  # -1 on boundary faces
    va: np.ndarray  # (nf, nq, k)
    ga: np.ndarray  # (nf, nq, k, 2)
    vb: np.ndarray | None
    gb: np.ndarray | None


def face_tables(space: LegendreBoxSpace, ids, degree: int | None = None) -> FaceTables:
    faces = space.mesh.faces
    ids = np.asarray(ids, dtype=np.int64)
    degree = degree or space.quadrature_degree
    pts, wts = face_quadrature(faces, degree, ids)
    nf, nq = wts.shape
    a = faces.elements[ids, 0]
    b = faces.elements[ids, 1]
    flat = pts.reshape(-1, 2)
    va, ga = space.eval_basis(np.repeat(a, nq), flat)
    k = space.n_local
    va, ga = va.reshape(nf, nq, k), ga.reshape(nf, nq, k, 2)
    vb = gb = None
    if np.all(b >= 0) and nf:
        vb, gb = space.eval_basis(np.repeat(b, nq), flat)
        vb, gb = vb.reshape(nf, nq, k), gb.reshape(nf, nq, k, 2)
    return FaceTables(ids, pts, wts, faces.normals[ids], a, b, va, ga, vb, gb)


def element_tables(space: LegendreBoxSpace, degree: int | None = None):
    """Composite volume rule with basis values, grouped by element."""
    pts, wts, el = space.element_quadrature(degree)
    val, grad = space.eval_basis(el, pts)
    return pts, wts, el, val, grad


def _reduce_by_element(space, el, blocks):
    out = np.zeros((space.n_elements,) + blocks.shape[1:])
    if len(el) == 0:
        return out
    starts = np.flatnonzero(np.r_[True, el[1:] != el[:-1]])
    sums = np.add.reduceat(blocks, starts, axis=0)
    np.add.at(out, el[starts], sums)
    return out


@dataclass
class IpdgOperator:
    space: LegendreBoxSpace
    matrix: sp.csr_matrix
    sigma: np.ndarray  # per face (0 on faces not in the skeleton)
    dirichlet: np.ndarray  # boolean mask over faces
    include_mass: bool
    C_sigma: float

    def energy(self, coeffs) -> float:
        v = np.asarray(coeffs).reshape(-1)
        return float(v @ (self.matrix @ v))


def assemble_ipdg(space: LegendreBoxSpace, C_sigma: float = DEFAULT_C_SIGMA, include_mass: bool = True,
                  dirichlet_faces=None, degree: int | None = None) -> IpdgOperator:
    """Assemble the symmetric interior penalty form.

    ``dirichlet_faces`` is a boolean mask (or id list) of boundary faces
    where homogeneous Dirichlet data is imposed weakly through the boundary
    jump; ``None`` selects every boundary face.
    """
    p = space.degree
    if p < 1:
        raise ValueError("interior penalty solves need polynomial degree p >= 1")
    mesh = space.mesh
    faces = mesh.faces
    k = space.n_local
    nel = space.n_elements

    _, wts, el, val, grad = element_tables(space, degree)
    local = np.einsum("q,qid,qjd->qij", wts, grad, grad)
    if include_mass:
        local += np.einsum("q,qi,qj->qij", wts, val, val)
    vol = _reduce_by_element(space, el, local)
    rows = [np.repeat(space.dofs(np.arange(nel)), k, axis=1).ravel()]
    cols = [np.tile(space.dofs(np.arange(nel)), (1, k)).ravel()]
    data = [vol.ravel()]

    if dirichlet_faces is None:
        dmask = faces.boundary.copy()
    else:
        sel = np.asarray(dirichlet_faces)
        dmask = np.zeros(len(faces), dtype=bool)
        if sel.dtype == bool:
            dmask[:] = sel
        else:
            dmask[sel.astype(np.int64)] = True
        if np.any(dmask & faces.interior):
            raise ValueError("Dirichlet faces must be boundary faces")
    sigma_all = penalty_sigma(mesh, C_sigma, p)
    sigma = np.where(faces.interior | dmask, sigma_all, 0.0)

    inner = np.flatnonzero(faces.interior)
    if len(inner):
        ft = face_tables(space, inner, degree)
        sig = sigma[inner][:, None]
        dna = np.einsum("fqkd,fd->fqk", ft.ga, ft.normals)
        dnb = np.einsum("fqkd,fd->fqk", ft.gb, ft.normals)
        sides = {0: (ft.va, dna, 1.0, ft.a), 1: (ft.vb, dnb, -1.0, ft.b)}
        for s in (0, 1):
            vs, dns, cs, es = sides[s]
            for t in (0, 1):
                vt, dnt, ct, et = sides[t]
                w = ft.weights
                blk = (np.einsum("fq,fqi,fqj->fij", w * sig * cs * ct, vs, vt)
                       - 0.5 * cs * np.einsum("fq,fqi,fqj->fij", w, vs, dnt)
                       - 0.5 * ct * np.einsum("fq,fqi,fqj->fij", w, dns, vt))
                rows.append(np.repeat(space.dofs(es), k, axis=1).ravel())
                cols.append(np.tile(space.dofs(et), (1, k)).ravel())
                data.append(blk.ravel())

    bnd = np.flatnonzero(dmask)
    if len(bnd):
        ft = face_tables(space, bnd, degree)
        sig = sigma[bnd][:, None]
        dn = np.einsum("fqkd,fd->fqk", ft.ga, ft.normals)
        w = ft.weights
        blk = (np.einsum("fq,fqi,fqj->fij", w * sig, ft.va, ft.va)
               - np.einsum("fq,fqi,fqj->fij", w, ft.va, dn)
               - np.einsum("fq,fqi,fqj->fij", w, dn, ft.va))
        rows.append(np.repeat(space.dofs(ft.a), k, axis=1).ravel())
        cols.append(np.tile(space.dofs(ft.a), (1, k)).ravel())
        data.append(blk.ravel())

    n = space.ndofs
    mat = sp.coo_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(n, n)).tocsr()
    asym = check_symmetric(mat)
    if asym > 1e-12:
        raise ValueError(f"assembled interior penalty matrix is not symmetric ({asym:.2e})")
    mat = 0.5 * (mat + mat.T)
    return IpdgOperator(space, mat.tocsr(), sigma, dmask, include_mass, C_sigma)


def solve_shape_gradient(operator: IpdgOperator, rhs, rel_tol: float = 1e-10) -> list[DgField]:
    """Solve for the gradient components sharing one matrix; ``rhs`` is (ndofs, d)."""
    rhs = np.asarray(rhs, dtype=float)
    if rhs.ndim == 1:
        rhs = rhs[:, None]
    sol = solve_spd(operator.matrix, rhs, rel_tol=rel_tol)
    return [DgField(operator.space, sol[:, i]) for i in range(sol.shape[1])]


def dirichlet_rhs(operator: IpdgOperator, data, degree: int | None = None) -> np.ndarray:
    """Nitsche load ``sum_e int_e (sigma g w - g dw/dn)`` for boundary data ``g``.

    ``data`` is a callable g(points) or a mapping from face tag to a
    constant or callable.
    """
    space = operator.space
    faces = space.mesh.faces
    bnd = np.flatnonzero(operator.dirichlet)
    rhs = np.zeros(space.ndofs)
    if len(bnd) == 0:
        return rhs
    ft = face_tables(space, bnd, degree)
    g = np.zeros(ft.weights.shape)
    if callable(data):
        g = np.asarray(data(ft.points.reshape(-1, 2)), dtype=float).reshape(g.shape)
    else:
        tags = faces.tags[bnd]
        for tag, value in data.items():
            sel = tags == tag
            if not sel.any():
                continue
            if callable(value):
                g[sel] = np.asarray(value(ft.points[sel].reshape(-1, 2))).reshape(g[sel].shape)
            else:
                g[sel] = float(value)
    sig = operator.sigma[bnd][:, None]
    dn = np.einsum("fqkd,fd->fqk", ft.ga, ft.normals)
    loc = np.einsum("fq,fqk->fk", ft.weights * g * sig, ft.va) - np.einsum("fq,fqk->fk", ft.weights * g, dn)
    np.add.at(rhs, space.dofs(ft.a).ravel(), loc.ravel())
    return rhs


def solve_state_laplace(space: LegendreBoxSpace, dirichlet_data=None, C_sigma: float = DEFAULT_C_SIGMA,
                        degree: int | None = None, rel_tol: float = 1e-10) -> DgField:
    """Interior-penalty solution of -Laplace u = 0 with weak Dirichlet data.

    Default data: -1 on FIXED faces (hold-all boundary), 0 on FREE faces.
    """
    if dirichlet_data is None:
        dirichlet_data = {FIXED: -1.0, FREE: 0.0}
    op = assemble_ipdg(space, C_sigma, include_mass=False, degree=degree)
    rhs = dirichlet_rhs(op, dirichlet_data, degree)
    return DgField(space, solve_spd(op.matrix, rhs, rel_tol=rel_tol))
