"""Shape-gradient validation against a conforming quadratic reference solve."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .dg.quadrature import reference_triangle_rule
from .dg.space import DgField, LegendreBoxSpace
from .elliptic import DEFAULT_C_SIGMA, assemble_ipdg, solve_shape_gradient
from .mesh.agglomerate import agglomerate_total
from .mesh.generators import square_mesh
from .mesh.refine import FittedMesh, refine_to_fit
from .recovery import ContinuousField, lagrange_shape, local_node_ids
from .shape_calc import cassini, cassini_grad, dJ_rhs_unconstrained


def uniform_refine(mesh: FittedMesh) -> FittedMesh:
    """Split every triangle into four through its edge midpoints.

    The new midpoints keep the interface flag when both edge ends lie on
    the fitted zero-level set, so the polygonal shape is unchanged.
    """
    nv = mesh.n_vertices
    mid = mesh.edge_midpoints
    verts = np.vstack([mesh.vertices, mid])
    t = mesh.triangles
    m = nv + mesh.tri_edges  # midpoint of local edge k = (v_k, v_{k+1})
    tris = np.concatenate([
        np.column_stack([t[:, 0], m[:, 0], m[:, 2]]),
        np.column_stack([m[:, 0], t[:, 1], m[:, 1]]),
        np.column_stack([m[:, 2], m[:, 1], t[:, 2]]),
        np.column_stack([m[:, 0], m[:, 1], m[:, 2]]),
    ])
    parent = np.tile(np.arange(mesh.n_triangles), 4)
    order = np.argsort(parent, kind="stable")
    e = mesh.edges
    phi = np.concatenate([mesh.phi, 0.5 * (mesh.phi[e[:, 0]] + mesh.phi[e[:, 1]])])
    iface = np.concatenate([mesh.interface, mesh.interface[e[:, 0]] & mesh.interface[e[:, 1]]])
    sign = np.tile(mesh.sign, 4)
    return FittedMesh(verts, tris[order], parent[order], phi, iface, sign[order])


def conforming_shape_gradient(mesh: FittedMesh, f, grad_f, quad_degree: int = 8) -> ContinuousField:
    """H^1_0 Riesz representative of ``V -> int_Omega grad f . V + f div V`` with P2 elements."""
    rule = reference_triangle_rule(quad_degree)
    lag, dref = lagrange_shape(2, rule.points)  # (nq, 6), (nq, 6, 2)
    ids = local_node_ids(mesh, 2)
    c = mesh.coords
    jac = np.stack([c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]], axis=2)
    inv = np.linalg.inv(jac)
    det = np.abs(np.linalg.det(jac))
    grads = np.einsum("qkr,trs->tqks", dref, inv)
    wts = det[:, None] * rule.weights[None, :]
    stiff = np.einsum("tq,tqis,tqjs->tij", wts, grads, grads) + np.einsum("tq,qi,qj->tij", wts, lag, lag)
    n = mesh.n_vertices + mesh.n_edges
    rows = np.repeat(ids, 6, axis=1).ravel()
    cols = np.tile(ids, (1, 6)).ravel()
    A = sp.coo_matrix((stiff.ravel(), (rows, cols)), shape=(n, n)).tocsr()

    inside = np.flatnonzero(mesh.inside)
    pts = c[inside, 0][:, None, :] + np.einsum("tij,qj->tqi", jac[inside], rule.points)
    fv = np.asarray(f(pts.reshape(-1, 2))).reshape(pts.shape[:2])
    gf = np.asarray(grad_f(pts.reshape(-1, 2))).reshape(pts.shape)
    w = wts[inside]
    loc = (np.einsum("tq,tqc,qk->tkc", w, gf, lag)
           + np.einsum("tq,tq,tqkc->tkc", w, fv, grads[inside]))
    b = np.zeros((n, 2))
    np.add.at(b, ids[inside].ravel(), loc.reshape(-1, 2))

    bnd = np.concatenate([mesh.boundary_vertex, mesh.boundary_edge])
    free = np.flatnonzero(~bnd)
    sol = np.zeros((n, 2))
    lu = sla.splu(A[free][:, free].tocsc())
    sol[free] = lu.solve(b[free])
    return ContinuousField(mesh, 2, sol)


def l2_difference(poly_field, reference: ContinuousField, degree: int = 8) -> float:
    """L2 norm over the hold-all domain of a polytopic dG field minus a P2 field.

    The reference mesh is the polytopic fine mesh or a uniform refinement of
    it (triangles ordered by parent).
    """
    space = poly_field.space
    fine = space.mesh.fine
    ref = reference.mesh
    rule = reference_triangle_rule(degree)
    lag, _ = lagrange_shape(2, rule.points)
    c = ref.coords
    jac = np.stack([c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]], axis=2)
    det = np.abs(np.linalg.det(jac))
    pts = c[:, 0][:, None, :] + np.einsum("tij,qj->tqi", jac, rule.points)
    vref = np.einsum("qk,tkc->tqc", lag, reference.values[reference.local_nodes])
    if ref is fine:
        fine_tri = np.arange(ref.n_triangles)
    else:
        fine_tri = ref.parent
        if fine_tri is None or len(fine_tri) != ref.n_triangles:
            raise ValueError("reference mesh must refine the polytopic fine mesh")
    el = space.mesh.labels[fine_tri]
    nq = pts.shape[1]
    vh = poly_field.evaluate(np.repeat(el, nq), pts.reshape(-1, 2)).reshape(vref.shape)
    err = ((vh - vref) ** 2).sum(-1)
    return math.sqrt(float((det[:, None] * rule.weights[None, :] * err).sum()))


@dataclass
class TableRow:
    i: int
    N: int
    n_elements: int
    err_l: float
    rate_l: float
    err_q: float
    rate_q: float


def rates(N, errs) -> list[float]:
    """``log(err_i / err_{i-1}) / log(N_i / N_{i-1})``; NaN for the first level."""
    out = [math.nan]
    for i in range(1, len(errs)):
        out.append(math.log(errs[i] / errs[i - 1]) / math.log(N[i] / N[i - 1]))
    return out


def convergence_table(levels=(36, 144, 576, 2304), base_n: int = 96, radius: float = 0.52,
                      reference_refinements: int = 0, seed: int = 0, degrees=(1, 2),
                      C_sigma: float = DEFAULT_C_SIGMA, f=cassini, grad_f=cassini_grad) -> list[TableRow]:
    """Polytopic dG shape-gradient errors against a conforming P2 reference.

    Every level agglomerates the same fitted square mesh into ``N`` polytopes;
    the reference is solved on that fitted mesh, optionally refined uniformly.
    """
    base = square_mesh(base_n)
    fitted = refine_to_fit(base, np.hypot(base.vertices[:, 0], base.vertices[:, 1]) - radius)
    ref_mesh = fitted
    parent = np.arange(fitted.n_triangles)
    for _ in range(reference_refinements):
        ref_mesh = uniform_refine(ref_mesh)
        parent = parent[ref_mesh.parent]
    if reference_refinements:
        ref_mesh = FittedMesh(ref_mesh.vertices, ref_mesh.triangles, parent, ref_mesh.phi,
                              ref_mesh.interface, ref_mesh.sign)
    g_ref = conforming_shape_gradient(ref_mesh, f, grad_f)
    errs = {p: [] for p in degrees}
    counts = []
    for N in levels:
        poly = agglomerate_total(fitted, N, seed)
        counts.append(poly.n_elements)
        for p in degrees:
            space = LegendreBoxSpace(poly, p)
            rhs = dJ_rhs_unconstrained(space, f, grad_f)
            g = solve_shape_gradient(assemble_ipdg(space, C_sigma, include_mass=True), rhs)
            vec = DgField(space, np.stack([gi.coeffs for gi in g], axis=-1))
            errs[p].append(l2_difference(vec, g_ref))
    nan = [math.nan] * len(levels)
    err_l, err_q = errs.get(1, nan), errs.get(2, nan)
    rate_l = rates(levels, err_l) if 1 in errs else nan
    rate_q = rates(levels, err_q) if 2 in errs else nan
    return [TableRow(i + 1, N, counts[i], err_l[i], rate_l[i], err_q[i], rate_q[i])
            for i, N in enumerate(levels)]
