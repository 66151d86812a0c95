"""Objectives, dG-consistent shape-derivative loads and verification helpers.

Lifting contributions ``R(w)`` never appear explicitly: every occurrence is
rewritten as a skeleton integral ``-int jump(w) . avg(tau)`` where ``tau``
is extended by zero outside the shape.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree
from skimage.measure import find_contours

from .dg.quadrature import map_triangle_rule
from .dg.space import DgField, LegendreBoxSpace, l2_project
from .elliptic import DEFAULT_C_SIGMA, face_tables, solve_state_laplace
from .mesh.agglomerate import extract_interior_submesh
from .mesh.polytopic import FIXED, FREE, PolytopicMesh
from .mesh.refine import FittedMesh, refine_to_fit
from .mesh.simplicial import MeshError, SimplicialMesh
from .recovery import ContinuousField

CASSINI_FOCUS = 0.7
CASSINI_LEVEL = 0.6


def cassini(x: np.ndarray) -> np.ndarray:
    r1 = (x[:, 0] - CASSINI_FOCUS) ** 2 + x[:, 1] ** 2
    r2 = (x[:, 0] + CASSINI_FOCUS) ** 2 + x[:, 1] ** 2
    return (r1 * r2) ** 0.25 - CASSINI_LEVEL


def cassini_grad(x: np.ndarray) -> np.ndarray:
    dx1, dx2 = x[:, 0] - CASSINI_FOCUS, x[:, 0] + CASSINI_FOCUS
    y = x[:, 1]
    r1 = dx1**2 + y**2
    r2 = dx2**2 + y**2
    prod = np.maximum(r1 * r2, 1e-300)
    # d/dx (r1 r2)^(1/4) = (r1 r2)^(-3/4) (r1' r2 + r1 r2') / 4
    s = 0.25 * prod ** (-0.75)
    gx = s * (2 * dx1 * r2 + 2 * dx2 * r1)
    gy = s * (2 * y * r2 + 2 * y * r1)
    return np.column_stack([gx, gy])


@dataclass
class UnconstrainedProblem:
    """Minimise ``int_Omega f``."""

    f: Callable[[np.ndarray], np.ndarray] = cassini
    grad_f: Callable[[np.ndarray], np.ndarray] = cassini_grad
    kind: str = field(default="unconstrained", init=False)

    def objective(self, fitted: FittedMesh, degree: int | None = None) -> float:
        return objective_unconstrained(fitted, self.f, degree)


@dataclass
class BernoulliProblem:
    """Minimise ``int_Omega |grad u|^2 + eta^2`` with u harmonic, -1 on the
    hold-all boundary and 0 on the free boundary."""

    eta: float = 1.0 / (-0.55 * math.log(0.55))
    fixed_value: float = -1.0
    free_value: float = 0.0
    C_sigma: float = DEFAULT_C_SIGMA
    kind: str = field(default="bernoulli", init=False)

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")

    @property
    def dirichlet_data(self) -> dict:
        return {FIXED: self.fixed_value, FREE: self.free_value}


# -- objectives ---------------------------------------------------------------

def objective_unconstrained(fitted: SimplicialMesh, f, degree: int | None = None, region=None) -> float:
    """Composite quadrature of ``f`` over the fine triangles of the shape."""
    if region is None:
        region = fitted.inside
    tris = np.flatnonzero(region)
    if len(tris) == 0:
        return 0.0
    pts, wts = map_triangle_rule(fitted.coords[tris], degree or 4)
    vals = np.asarray(f(pts.reshape(-1, 2)), dtype=float).reshape(wts.shape)
    return float((wts * vals).sum())


def objective_bernoulli(sub: PolytopicMesh, u: DgField, eta: float, degree: int | None = None) -> float:
    """``int_Omega |grad_h u|^2 + eta^2 |Omega|`` on the extracted submesh."""
    pts, wts, el = u.space.element_quadrature(degree)
    g = u.gradient(el, pts)
    return float(wts @ (g**2).sum(-1) + eta**2 * sub.areas.sum())


@dataclass
class BernoulliState:
    sub: PolytopicMesh
    space: LegendreBoxSpace
    u: DgField

    def on_parent(self, parent_space: LegendreBoxSpace) -> DgField:
        """The state as a field on the full polytopic mesh (zero outside)."""
        coeffs = np.zeros((parent_space.n_elements, parent_space.n_local))
        coeffs[self.sub.parent_element] = self.u.coeffs
        return DgField(parent_space, coeffs)


def solve_bernoulli_state(poly: PolytopicMesh, p: int, problem: BernoulliProblem,
                          degree: int | None = None) -> BernoulliState:
    sub = extract_interior_submesh(poly)
    space = LegendreBoxSpace(sub, p)
    u = solve_state_laplace(space, problem.dirichlet_data, problem.C_sigma, degree)
    return BernoulliState(sub, space, u)


# -- shape-derivative loads ---------------------------------------------------

def _inside_elements(space: LegendreBoxSpace) -> np.ndarray:
    sign = space.mesh.element_sign
    if sign is None:
        raise MeshError("polytopic mesh carries no element signs")
    return sign < 0


def _skeleton_load(space: LegendreBoxSpace, tau_a, tau_b, ft, rhs):
    """Add ``-int jump(w) . avg(tau)`` for the faces in ``ft``.

    ``tau_a``/``tau_b`` are (nf, nq, 2, ncomp) traces from each side, already
    multiplied by the shape indicator. Boundary faces use the one-sided trace.
    """
    k = space.n_local
    interior = ft.b >= 0
    avg = np.where(interior[:, None, None, None], 0.5 * (tau_a + tau_b), tau_a)
    flux = np.einsum("fqdc,fd->fqc", avg, ft.normals) * ft.weights[..., None]
    la = -np.einsum("fqc,fqk->fkc", flux, ft.va)
    np.add.at(rhs, space.dofs(ft.a).ravel(), la.reshape(-1, la.shape[-1]))
    if interior.any():
        b = ft.b[interior]
        pts = ft.points[interior].reshape(-1, 2)
        nq = ft.points.shape[1]
        vb, _ = space.eval_basis(np.repeat(b, nq), pts)
        vb = vb.reshape(len(b), nq, k)
        lb = np.einsum("fqc,fqk->fkc", flux[interior], vb)
        np.add.at(rhs, space.dofs(b).ravel(), lb.reshape(-1, lb.shape[-1]))


def _faces_touching(space: LegendreBoxSpace, inside: np.ndarray, include_boundary: bool) -> np.ndarray:
    faces = space.mesh.faces
    a, b = faces.elements[:, 0], faces.elements[:, 1]
    touch = inside[a] | np.where(b >= 0, inside[np.maximum(b, 0)], False)
    if not include_boundary:
        touch &= faces.interior
    return np.flatnonzero(touch)


def _side_values(space, field_fn, ft, inside):
    """Evaluate ``field_fn(elements, points)`` on both sides, zero outside the shape."""
    nf, nq = ft.weights.shape
    pts = ft.points.reshape(-1, 2)
    ea = np.repeat(ft.a, nq)
    va = field_fn(ea, pts)
    va = va * inside[ea].reshape((-1,) + (1,) * (va.ndim - 1))
    vb = np.zeros_like(va)
    eb = np.repeat(ft.b, nq)
    has_b = eb >= 0
    if has_b.any():
        vals = field_fn(eb[has_b], pts[has_b])
        vb[has_b] = vals * inside[eb[has_b]].reshape((-1,) + (1,) * (vals.ndim - 1))
    shape = (nf, nq) + va.shape[1:]
    return va.reshape(shape), vb.reshape(shape)


def dJ_rhs_unconstrained(space: LegendreBoxSpace, f, grad_f, degree: int | None = None,
                         projected_f: DgField | None = None) -> np.ndarray:
    """Loads ``dJ_i(w)`` for every basis function ``w``; returns (ndofs, 2).

    ``int_Omega (grad f . E_i) w + f dw/dx_i - int_{Gamma cap closure Omega} jump(w) . avg(Pi f E_i)``
    with ``Pi f`` the L2 projection of f on the elements inside the shape.
    Hold-all boundary faces bordering the shape enter one-sided.
    """
    inside = _inside_elements(space)
    rhs = np.zeros((space.ndofs, 2))
    elements = np.flatnonzero(inside)
    if len(elements) == 0:
        return rhs
    if projected_f is None:
        projected_f = l2_project(f, space, region=inside, degree=degree)
    pts, wts, el = space.element_quadrature(degree, elements)
    val, grad = space.eval_basis(el, pts)
    fv = np.asarray(f(pts), dtype=float)
    gf = np.asarray(grad_f(pts), dtype=float)
    loc = (np.einsum("q,qc,qk->qkc", wts, gf, val) + np.einsum("q,q,qkc->qkc", wts, fv, grad))
    np.add.at(rhs, space.dofs(el).ravel(), loc.reshape(-1, 2))

    ids = _faces_touching(space, inside, include_boundary=True)
    if len(ids):
        ft = face_tables(space, ids, degree)
        fa, fb = _side_values(space, projected_f.evaluate, ft, inside)
        eye = np.eye(2)
        tau_a = fa[..., None, None] * eye  # (nf, nq, 2, 2): component d of Pi f E_c
        tau_b = fb[..., None, None] * eye
        _skeleton_load(space, tau_a, tau_b, ft, rhs)
    return rhs


def _bernoulli_flux(grad_u: np.ndarray, eta: float) -> np.ndarray:
    """tau_c = (eta^2 + |grad u|^2) E_c - 2 (grad u . E_c) grad u as (..., 2, 2) [d, c]."""
    a = eta**2 + (grad_u**2).sum(-1)
    eye = np.eye(2)
    return a[..., None, None] * eye - 2.0 * grad_u[..., :, None] * grad_u[..., None, :]


def dJ_rhs_bernoulli(space: LegendreBoxSpace, u_full: DgField, eta: float, degree: int | None = None) -> np.ndarray:
    """Loads of the state-constrained shape derivative; returns (ndofs, 2).

    ``u_full`` is the state injected into the full polytopic mesh (same
    agglomerates, zero outside the shape). The skeleton term runs over the
    faces that touch the closure of the shape, hold-all boundary faces
    included (one-sided), like the unconstrained load.
    """
    if u_full.space.mesh is not space.mesh:
        raise MeshError("state and test space live on different polytopic meshes")
    inside = _inside_elements(space)
    rhs = np.zeros((space.ndofs, 2))
    elements = np.flatnonzero(inside)
    if len(elements) == 0:
        return rhs
    pts, wts, el = space.element_quadrature(degree, elements)
    _, grad = space.eval_basis(el, pts)
    gu = u_full.gradient(el, pts)
    tau = _bernoulli_flux(gu, eta)  # (q, d, c)
    loc = np.einsum("q,qdc,qkd->qkc", wts, tau, grad)
    np.add.at(rhs, space.dofs(el).ravel(), loc.reshape(-1, 2))

    ids = _faces_touching(space, inside, include_boundary=True)
    if len(ids):
        ft = face_tables(space, ids, degree)
        ga, gb = _side_values(space, u_full.gradient, ft, inside)
        ta = _bernoulli_flux(ga, eta) * inside[ft.a][:, None, None, None]
        has_b = ft.b >= 0
        tb = _bernoulli_flux(gb, eta)
        tb = tb * np.where(has_b, inside[np.maximum(ft.b, 0)], False)[:, None, None, None]
        _skeleton_load(space, ta, tb, ft, rhs)
    return rhs


def project_direction(space: LegendreBoxSpace, V, degree: int | None = None) -> np.ndarray:
    """L2 projection of a vector field ``V`` into the space; (ndofs, 2)."""
    fn = V.evaluate if isinstance(V, ContinuousField) else V
    return l2_project(fn, space, degree=degree).vector


def apply_rhs(rhs: np.ndarray, space: LegendreBoxSpace, V, degree: int | None = None) -> float:
    """``sum_i dJ_i(Pi V_i)`` for a direction given as callable or continuous field."""
    coeff = project_direction(space, V, degree)
    return float((rhs * coeff).sum())


# -- finite-difference oracle -------------------------------------------------

def _vertex_motion(mesh: SimplicialMesh, V) -> np.ndarray:
    if isinstance(V, ContinuousField):
        return V.evaluate(mesh.vertices)
    return np.asarray(V(mesh.vertices), dtype=float)


def fd_shape_derivative_oracle(problem, fitted: FittedMesh, V, t: float = 1e-4,
                               poly: PolytopicMesh | None = None, p: int = 2,
                               degree: int | None = None) -> float:
    """``(J(Omega_t) - J(Omega)) / t`` with the fine vertices moved by ``t V``.

    For the Bernoulli problem the agglomeration ``poly`` of ``fitted`` is
    kept and the state is re-solved on the moved mesh.
    """
    disp = _vertex_motion(fitted, V)
    try:
        moved = fitted.with_vertices(fitted.vertices + t * disp)
    except MeshError as exc:
        raise MeshError(f"{exc}; shrink the step t") from exc
    if isinstance(problem, UnconstrainedProblem):
        j0 = objective_unconstrained(fitted, problem.f, degree)
        j1 = objective_unconstrained(moved, problem.f, degree)
        return (j1 - j0) / t
    if poly is None or poly.fine is not fitted:
        raise ValueError("the Bernoulli oracle needs the agglomeration of the fitted mesh")

    sub = extract_interior_submesh(poly)

    def value(mesh):
        moved = PolytopicMesh(mesh, sub.labels, element_sign=sub.element_sign,
                              parent_element=sub.parent_element)
        space = LegendreBoxSpace(moved, p)
        u = solve_state_laplace(space, problem.dirichlet_data, problem.C_sigma, degree)
        return objective_bernoulli(moved, u, problem.eta, degree)

    return (value(moved) - value(fitted)) / t


# -- zero-level-set distance --------------------------------------------------

class Circle:
    """Reference curve ``|x - c| = r`` with closed-form distance."""

    def __init__(self, radius: float, center=(0.0, 0.0)):
        self.radius = float(radius)
        self.center = np.asarray(center, dtype=float)

    def __call__(self, x):
        return np.hypot(*(np.asarray(x) - self.center).T) - self.radius

    def distance(self, points: np.ndarray) -> np.ndarray:
        return np.abs(self(points))


class ImplicitCurve:
    """Zero set of ``func`` inside a box, sampled as a dense polyline.

    The marching-squares contour of a fine grid is projected onto the curve
    by Newton steps along the gradient; distances are point-to-segment
    distances to the nearest polyline pieces.
    """

    def __init__(self, func, grad=None, bounds=(-1.0, 1.0, -1.0, 1.0), resolution: int = 2001,
                 newton_steps: int = 3):
        self.func = func
        x0, x1, y0, y1 = bounds
        xs = np.linspace(x0, x1, resolution)
        ys = np.linspace(y0, y1, resolution)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        F = np.asarray(func(np.column_stack([X.ravel(), Y.ravel()]))).reshape(X.shape)
        segments = []
        for c in find_contours(F, 0.0):
            pts = np.column_stack([np.interp(c[:, 0], np.arange(resolution), xs),
                                   np.interp(c[:, 1], np.arange(resolution), ys)])
            for _ in range(newton_steps if grad is not None else 0):
                g = grad(pts)
                pts = pts - (func(pts) / np.maximum((g**2).sum(1), 1e-300))[:, None] * g
            segments.append(np.stack([pts[:-1], pts[1:]], axis=1))
        if not segments:
            raise ValueError("reference curve has an empty zero set in the box")
        self.segments = np.concatenate(segments)
        mids = self.segments.mean(axis=1)
        self._tree = cKDTree(mids)
        self._half = np.sqrt(((self.segments[:, 1] - self.segments[:, 0]) ** 2).sum(1)).max()

    def distance(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        d0, _ = self._tree.query(points)
        out = np.empty(len(points))
        cand = self._tree.query_ball_point(points, d0 + self._half)
        for i, ids in enumerate(cand):
            s = self.segments[ids]
            a, b = s[:, 0], s[:, 1]
            ab = b - a
            tt = np.clip(((points[i] - a) * ab).sum(1) / np.maximum((ab**2).sum(1), 1e-300), 0, 1)
            proj = a + tt[:, None] * ab
            out[i] = np.sqrt(((proj - points[i]) ** 2).sum(1)).min()
        return out


def zero_level_set_points(phi) -> np.ndarray:
    """Fitted zero-level-set vertices of ``phi`` (ContinuousField or FittedMesh)."""
    fitted = phi if isinstance(phi, FittedMesh) else refine_to_fit(phi.mesh, phi)
    pts = fitted.interface_points()
    if len(pts) == 0:
        raise ValueError("the zero-level set is empty")
    return pts


def zero_level_set_distance(phi, reference) -> float:
    """``max_{x in {phi=0}} dist(x, {reference = 0})``."""
    pts = zero_level_set_points(phi)
    return float(reference.distance(pts).max())


def level_set_gradient_median(phi: ContinuousField, fitted: FittedMesh | None = None) -> float:
    """Median of ``|grad phi|`` at the fitted zero-level-set vertices."""
    pts = zero_level_set_points(fitted if fitted is not None else phi)
    g = phi.gradient(pts)
    return float(np.median(np.sqrt((g**2).sum(-1))))


__all__ = [
    "BernoulliProblem", "BernoulliState", "Circle", "ImplicitCurve", "UnconstrainedProblem",
    "apply_rhs", "cassini", "cassini_grad", "dJ_rhs_bernoulli", "dJ_rhs_unconstrained",
    "fd_shape_derivative_oracle", "level_set_gradient_median",
    "objective_bernoulli", "objective_unconstrained", "project_direction", "solve_bernoulli_state",
    "zero_level_set_distance", "zero_level_set_points",
]
