import numpy as np
import pytest
from scipy.integrate import dblquad

from polydg_shape.dg import LegendreBoxSpace, l2_project
from polydg_shape.dg.quadrature import map_segment_rule
from polydg_shape.elliptic import (assemble_ipdg, element_tables, solve_shape_gradient,
                                   solve_state_laplace, dirichlet_rhs)
from polydg_shape.mesh.agglomerate import agglomerate, agglomerate_total, extract_interior_submesh
from polydg_shape.mesh.generators import disc_mesh, square_mesh
from polydg_shape.mesh.polytopic import FIXED, FREE, PolytopicMesh
from polydg_shape.mesh.refine import refine_to_fit
from polydg_shape.mesh.simplicial import SimplicialMesh
from polydg_shape.recovery import ContinuousField
from polydg_shape.shape_calc import dJ_rhs_unconstrained

ONE = lambda x: np.ones(len(x))
ZERO2 = lambda x: np.zeros((len(x), 2))


def unit_square(n):
    m = square_mesh(n, 0.5)
    return SimplicialMesh(m.vertices + 0.5, m.triangles)


def square_cells(n):
    """Polytopic mesh of n x n square cells (the two triangles of each cell merged)."""
    m = unit_square(n)
    return PolytopicMesh(m, np.arange(m.n_triangles) // 2)


def l2_error(field, exact, degree=8):
    pts, w, el = field.space.element_quadrature(degree)
    return np.sqrt(w @ (field.evaluate(el, pts) - exact(pts)) ** 2)


def test_p0_rejected(poly_disc):
    with pytest.raises(ValueError):
        assemble_ipdg(LegendreBoxSpace(poly_disc, 0))


def test_single_element_constant_energy():
    tri = SimplicialMesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    space = LegendreBoxSpace(PolytopicMesh(tri, [0]), 1)
    op = assemble_ipdg(space, include_mass=True, dirichlet_faces=[])
    one = l2_project(ONE, space).vector
    assert op.energy(one) == pytest.approx(0.5, abs=1e-14)


def test_continuous_linear_reduces_to_h1_form():
    space = LegendreBoxSpace(PolytopicMesh(unit_square(1), [0, 1]), 1)
    u = lambda x: 1 + 2 * x[:, 0] - x[:, 1]
    op = assemble_ipdg(space, include_mass=True, dirichlet_faces=[])
    coeffs = l2_project(u, space).vector
    oracle, _ = dblquad(lambda y, x: (1 + 2 * x - y) ** 2 + 5.0, 0, 1, 0, 1)
    assert op.energy(coeffs) == pytest.approx(oracle, rel=1e-12)


def test_global_quadratic_on_agglomerates(poly_disc):
    space = LegendreBoxSpace(poly_disc, 2)
    u = lambda x: x[:, 0] ** 2 - 0.5 * x[:, 0] * x[:, 1] + 0.3 * x[:, 1]
    op = assemble_ipdg(space, include_mass=True, dirichlet_faces=[])
    coeffs = l2_project(u, space).vector
    pts, w, _ = space.element_quadrature(8)
    grad = np.column_stack([2 * pts[:, 0] - 0.5 * pts[:, 1], -0.5 * pts[:, 0] + 0.3])
    oracle = w @ ((grad ** 2).sum(axis=1) + u(pts) ** 2)
    assert op.energy(coeffs) == pytest.approx(oracle, rel=1e-10)


def test_matrix_symmetric_positive(poly_disc):
    op = assemble_ipdg(LegendreBoxSpace(poly_disc, 2))
    a = op.matrix
    assert abs(a - a.T).max() == 0.0
    v = np.random.default_rng(0).normal(size=(a.shape[0], 5))
    assert np.all(np.einsum("ij,ij->j", v, a @ v) > 0)


@pytest.mark.parametrize("p", [1, 2])
def test_manufactured_solution_rate(p):
    g = lambda x: np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])
    errs, hs = [], []
    for n in (4, 8, 16):
        space = LegendreBoxSpace(square_cells(n), p)
        op = assemble_ipdg(space, include_mass=True)
        _, w, el, val, _ = element_tables(space, 8)
        pts, _, _ = space.element_quadrature(8)
        rhs = np.zeros(space.ndofs)
        np.add.at(rhs, space.dofs(el).ravel(),
                  ((w * (2 * np.pi ** 2 + 1) * g(pts))[:, None] * val).ravel())
        u = solve_shape_gradient(op, rhs)[0]
        errs.append(l2_error(u, g))
        hs.append(1.0 / n)
    rates = np.log(np.array(errs[:-1]) / errs[1:]) / np.log(2.0)
    assert np.all(rates > p + 1 - 0.3), rates


def test_zero_rhs_gives_zero(poly_disc):
    space = LegendreBoxSpace(poly_disc, 2)
    g = solve_shape_gradient(assemble_ipdg(space), np.zeros((space.ndofs, 2)))
    assert all(np.all(gi.coeffs == 0) for gi in g)


def _shape_gradient(n, polytopes):
    base = square_mesh(n)
    fitted = refine_to_fit(base, np.hypot(*base.vertices.T) - 0.51)
    poly = agglomerate_total(fitted, polytopes, 0)
    space = LegendreBoxSpace(poly, 2)
    g = solve_shape_gradient(assemble_ipdg(space), dJ_rhs_unconstrained(space, ONE, ZERO2))
    return fitted, poly, g


def test_area_gradient_is_rotationally_symmetric():
    fitted, poly, g = _shape_gradient(30, 200)
    locator = ContinuousField(fitted, 1, np.zeros(fitted.n_vertices))
    theta = np.linspace(0, 2 * np.pi, 97)[:-1]
    for r in (0.3, 0.51, 0.7):
        x = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
        el = poly.labels[locator.locate(x)]
        mag = np.hypot(g[0].evaluate(el, x), g[1].evaluate(el, x))
        assert mag.std() <= 0.05 * mag.mean()


def test_gradient_boundary_trace_vanishes_under_refinement():
    norms = []
    for n, polytopes in ((15, 50), (30, 200)):
        _, poly, g = _shape_gradient(n, polytopes)
        f = poly.faces
        b = np.flatnonzero(f.boundary)
        pts, w = map_segment_rule(f.p0[b], f.p1[b], 8)
        el = np.repeat(f.elements[b, 0], pts.shape[1])
        norms.append(np.sqrt(sum(w.ravel() @ gi.evaluate(el, pts.reshape(-1, 2)) ** 2 for gi in g)))
    assert np.log2(norms[0] / norms[1]) >= 1.0


# -- state equation ------------------------------------------------------------------

@pytest.fixture(scope="module")
def whole_disc():
    base = disc_mesh(18, target_triangles=2085)
    fitted = refine_to_fit(base, -np.ones(base.n_vertices))
    return extract_interior_submesh(agglomerate(fitted, None, 0, 200, seed=0))


def test_constant_data_reproduced(whole_disc):
    space = LegendreBoxSpace(whole_disc, 2)
    u = solve_state_laplace(space, {FIXED: 0.7})
    pts, _, el = space.element_quadrature()
    assert np.abs(u.evaluate(el, pts) - 0.7).max() < 1e-8


def test_linear_data_reproduced(whole_disc):
    space = LegendreBoxSpace(whole_disc, 2)
    u = solve_state_laplace(space, lambda x: x[:, 0])
    assert l2_error(u, lambda x: x[:, 0]) <= 1e-3


def test_annulus_state(fitted_annulus):
    sub = extract_interior_submesh(agglomerate_total(fitted_annulus, 200, 0))
    space = LegendreBoxSpace(sub, 2)
    u = solve_state_laplace(space, {FIXED: -1.0, FREE: 0.0})
    exact = lambda x: np.log(np.hypot(*x.T)) / np.log(0.55) - 1.0
    assert l2_error(u, exact) <= 1e-2


def test_galerkin_residual(fitted_annulus):
    sub = extract_interior_submesh(agglomerate_total(fitted_annulus, 100, 0))
    space = LegendreBoxSpace(sub, 2)
    u = solve_state_laplace(space)
    op = assemble_ipdg(space, include_mass=False)
    b = dirichlet_rhs(op, {FIXED: -1.0, FREE: 0.0})
    assert np.linalg.norm(op.matrix @ u.vector - b) <= 1e-9 * np.linalg.norm(b)
