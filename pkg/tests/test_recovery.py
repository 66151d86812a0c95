import numpy as np
import pytest
from hypothesis import given, strategies as st

from polydg_shape.dg import DgField, LegendreBoxSpace, TriangleSpace, l2_project
from polydg_shape.dg.quadrature import map_segment_rule
from polydg_shape.mesh.generators import square_mesh
from polydg_shape.mesh.simplicial import MeshError, SimplicialMesh
from polydg_shape.recovery import (ContinuousField, inject_polytopic_to_simplicial,
                                   node_coordinates, recover_nodal_average)

# barycentric coordinates of 7 interior sample points
SAMPLES = np.array([[1 / 3, 1 / 3], [0.2, 0.2], [0.6, 0.2], [0.2, 0.6],
                    [0.1, 0.45], [0.45, 0.1], [0.45, 0.45]])


def sample_points(mesh):
    c = mesh.coords
    pts = c[:, None, 0] + SAMPLES[None, :, 0, None] * (c[:, None, 1] - c[:, None, 0]) \
        + SAMPLES[None, :, 1, None] * (c[:, None, 2] - c[:, None, 0])
    return pts  # (nt, 7, 2)


def random_field(space, seed, ncomp=None):
    rng = np.random.default_rng(seed)
    shape = (space.n_elements, space.n_local) + (() if ncomp is None else (ncomp,))
    return DgField(space, rng.normal(size=shape))


def edge_jumps(field: ContinuousField):
    mesh = field.mesh
    inner = np.flatnonzero(~mesh.boundary_edge)
    e = mesh.edges[inner]
    pts, _ = map_segment_rule(mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]], 6)
    nq = pts.shape[1]
    flat = pts.reshape(-1, 2)
    left = field.evaluate(flat, np.repeat(mesh.edge_tris[inner, 0], nq))
    right = field.evaluate(flat, np.repeat(mesh.edge_tris[inner, 1], nq))
    return np.abs(left - right).max()


# -- injection --------------------------------------------------------------------

def test_inject_constant(poly_disc):
    space = LegendreBoxSpace(poly_disc, 2)
    fine = inject_polytopic_to_simplicial(l2_project(lambda x: np.full(len(x), 2.5), space))
    pts = sample_points(poly_disc.fine)
    tri = np.repeat(np.arange(poly_disc.fine.n_triangles), 7)
    assert np.allclose(fine.evaluate(tri, pts.reshape(-1, 2)), 2.5, atol=1e-12)


def test_inject_affine(poly_disc):
    space = LegendreBoxSpace(poly_disc, 1)
    f = lambda x: 0.3 - x[:, 0] + 2 * x[:, 1]
    fine = inject_polytopic_to_simplicial(l2_project(f, space))
    pts = sample_points(poly_disc.fine).reshape(-1, 2)
    tri = np.repeat(np.arange(poly_disc.fine.n_triangles), 7)
    assert np.abs(fine.evaluate(tri, pts) - f(pts)).max() < 1e-12
    assert fine.space.degree == 2


def test_inject_random_p2_matches_parent(poly_disc):
    space = LegendreBoxSpace(poly_disc, 2)
    field = random_field(space, 3)
    fine = inject_polytopic_to_simplicial(field)
    pts = sample_points(poly_disc.fine).reshape(-1, 2)
    tri = np.repeat(np.arange(poly_disc.fine.n_triangles), 7)
    parent = field.evaluate(poly_disc.labels[tri], pts)
    assert np.abs(fine.evaluate(tri, pts) - parent).max() < 1e-12 * max(1.0, np.abs(parent).max())


def test_inject_requires_polytopic_field(square10):
    with pytest.raises(MeshError):
        inject_polytopic_to_simplicial(TriangleSpace(square10, 1).zero_field())


# -- nodal averaging -----------------------------------------------------------------

def test_average_of_one_sided_values():
    mesh = SimplicialMesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2], [0, 2, 3]])
    space = TriangleSpace(mesh, 1)
    field = l2_project(lambda x: np.where(x[:, 0] > x[:, 1], 1.0, 3.0), space)
    rec = recover_nodal_average(field, zero_boundary=False)
    # vertices 0 and 2 are shared by both triangles
    assert rec.values[0] == pytest.approx(2.0) and rec.values[2] == pytest.approx(2.0)
    assert rec.values[1] == pytest.approx(1.0) and rec.values[3] == pytest.approx(3.0)


@pytest.mark.parametrize("p", [1, 2])
def test_continuous_input_unchanged_inside(square10, p):
    f = lambda x: np.sin(2 * x[:, 0]) + x[:, 1] ** 2
    cont = ContinuousField.interpolate(square10, p, f)
    rec = recover_nodal_average(cont.to_dg())
    interior = ~rec.boundary_nodes()
    assert np.allclose(rec.values[interior], cont.values[interior], atol=1e-13)


@pytest.mark.parametrize("p", [1, 2])
def test_boundary_nodes_zero(square10, p):
    rec = recover_nodal_average(random_field(TriangleSpace(square10, p), 1))
    assert np.all(rec.values[rec.boundary_nodes()] == 0.0)


@pytest.mark.parametrize("p", [1, 2])
def test_recovered_fields_have_no_jumps(square10, p):
    rec = recover_nodal_average(random_field(TriangleSpace(square10, p), 2, ncomp=2))
    assert edge_jumps(rec) <= 1e-12


@pytest.mark.parametrize("p", [1, 2])
def test_recovery_is_idempotent(square10, p):
    once = recover_nodal_average(random_field(TriangleSpace(square10, p), 4))
    twice = recover_nodal_average(once.to_dg())
    assert np.allclose(twice.values, once.values, atol=1e-13)


@given(a=st.floats(-10, 10), b=st.floats(-10, 10), seed=st.integers(0, 1000))
def test_recovery_is_linear(a, b, seed):
    mesh = square_mesh(4)
    space = TriangleSpace(mesh, 2)
    u, v = random_field(space, seed), random_field(space, seed + 1)
    lhs = recover_nodal_average(a * u + b * v).values
    rhs = a * recover_nodal_average(u).values + b * recover_nodal_average(v).values
    assert np.abs(lhs - rhs).max() <= 1e-14 * max(1.0, abs(a) + abs(b)) * 10


def test_recovery_of_injected_gradient_is_continuous(poly_disc):
    space = LegendreBoxSpace(poly_disc, 2)
    fine = inject_polytopic_to_simplicial(random_field(space, 5, ncomp=2))
    rec = recover_nodal_average(fine, degree=2)
    assert edge_jumps(rec) <= 1e-12
    assert np.all(rec.values[rec.boundary_nodes()] == 0.0)


# -- continuous fields ---------------------------------------------------------------------

def test_to_dg_is_exact(square10):
    f = lambda x: 1 + x[:, 0] * x[:, 1] - x[:, 1] ** 2
    cont = ContinuousField.interpolate(square10, 2, f)
    dg = cont.to_dg()
    pts = sample_points(square10).reshape(-1, 2)
    tri = np.repeat(np.arange(square10.n_triangles), 7)
    assert np.abs(dg.evaluate(tri, pts) - f(pts)).max() < 1e-13
    assert np.abs(cont.evaluate(pts) - f(pts)).max() < 1e-13


def test_gradient_of_quadratic(square10):
    cont = ContinuousField.interpolate(square10, 2, lambda x: x[:, 0] ** 2 + 3 * x[:, 1])
    pts = np.random.default_rng(0).uniform(-0.9, 0.9, (30, 2))
    assert np.allclose(cont.gradient(pts), np.column_stack([2 * pts[:, 0], np.full(30, 3.0)]))


def test_wrong_node_count_rejected(square10):
    with pytest.raises(ValueError):
        ContinuousField(square10, 2, np.zeros(square10.n_vertices))


def test_locate_near_fitted_interface(fitted_disc):
    field = ContinuousField.interpolate(fitted_disc, 1, lambda x: x[:, 0])
    theta = np.linspace(0, 2 * np.pi, 200)
    for r in (0.509, 0.51, 0.511):
        x = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
        assert np.allclose(field.evaluate(x), x[:, 0], atol=1e-13)


def test_node_coordinates_degree2(square10):
    nodes = node_coordinates(square10, 2)
    assert len(nodes) == square10.n_vertices + square10.n_edges
