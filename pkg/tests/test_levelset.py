from types import SimpleNamespace

import numpy as np
import pytest
import scipy.sparse as sp

from polydg_shape.dg import DgField, TriangleSpace, l2_project
from polydg_shape.dg.quadrature import map_segment_rule
from polydg_shape.levelset import (BlowUpError, LevelSetState, advect, build_transport, cfl_dt,
                                   initial_state, rkdg_step)
from polydg_shape.mesh.generators import disc_mesh, square_mesh
from polydg_shape.recovery import ContinuousField


def velocity(mesh, func, degree=2):
    v = ContinuousField.interpolate(mesh, degree, func)
    v.values[v.boundary_nodes()] = 0.0
    return v


def rotation(x):
    return np.column_stack([-x[:, 1], x[:, 0]])


def smooth_cutoff(s, start, width):
    t = np.clip((s - start) / width, 0.0, 1.0)
    return 1.0 - t ** 3 * (10 - 15 * t + 6 * t * t)


def test_zero_velocity(square10):
    space = TriangleSpace(square10, 2)
    op = build_transport(space, velocity(square10, lambda x: np.zeros((len(x), 2))))
    assert op.stiffness.count_nonzero() == 0
    assert op.stationary and cfl_dt(op) == np.inf
    phi = l2_project(lambda x: x[:, 0] ** 2 - 0.3, space)
    new = rkdg_step(op, LevelSetState(phi), 0.1)
    assert np.array_equal(new.field.coeffs, phi.coeffs)
    assert new.time == pytest.approx(0.1) and new.steps == 1


def test_boundary_velocity_rejected(square10):
    v = ContinuousField.interpolate(square10, 2, rotation)
    with pytest.raises(ValueError):
        build_transport(TriangleSpace(square10, 1), v)


def test_p0_finite_volume_upwinding():
    mesh = square_mesh(6)
    space = TriangleSpace(mesh, 0)
    const = np.array([1.0, 0.4])
    v = ContinuousField(mesh, 1, np.where(mesh.boundary_vertex[:, None], 0.0, const))
    op = build_transport(space, v)
    field = DgField(space, np.random.default_rng(0).normal(size=(mesh.n_triangles, 1)))
    means = field.evaluate(np.arange(mesh.n_triangles), mesh.barycenters)
    rate = DgField(space, op.apply(field.vector)).evaluate(np.arange(mesh.n_triangles), mesh.barycenters)
    # oracle: |tau| dphi/dt = sum over inflow edges of (V.n) |e| (phi_tau - phi_upwind)
    oracle = np.zeros(mesh.n_triangles)
    normals = mesh.edge_normals()
    for e in np.flatnonzero(~mesh.boundary_edge):
        left, right = mesh.edge_tris[e]
        vn = v.values[mesh.edges[e]].mean(axis=0) @ normals[e]
        if vn < 0:
            oracle[left] += vn * mesh.edge_lengths[e] * (means[left] - means[right])
        else:
            oracle[right] += -vn * mesh.edge_lengths[e] * (means[right] - means[left])
    oracle /= mesh.areas
    assert np.allclose(rate, oracle, atol=1e-12 * np.abs(oracle).max())


@pytest.mark.parametrize("p", [1, 2])
def test_rotation_energy_identity(p):
    mesh = square_mesh(8)
    space = TriangleSpace(mesh, p)
    v = velocity(mesh, lambda x: rotation(x) * smooth_cutoff(np.hypot(*x.T), 0.5, 0.4)[:, None])
    op = build_transport(space, v)
    rng = np.random.default_rng(p)
    for _ in range(5):
        c = rng.normal(size=space.ndofs)
        field = DgField(space, c)
        form = c @ (op.stiffness @ c)
        pts, w, el = space.element_quadrature(2 * p + 4)
        grad_v = v.gradient(pts, el)
        vol = 0.5 * w @ ((grad_v[:, 0, 0] + grad_v[:, 1, 1]) * field.evaluate(el, pts) ** 2)
        inner = np.flatnonzero(~mesh.boundary_edge)
        e = mesh.edges[inner]
        fp, fw = map_segment_rule(mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]], max(4, 2 * p + 2))
        nq = fp.shape[1]
        flat = fp.reshape(-1, 2)
        left = np.repeat(mesh.edge_tris[inner, 0], nq)
        right = np.repeat(mesh.edge_tris[inner, 1], nq)
        vn = np.einsum("nc,nc->n", v.evaluate(flat, left), np.repeat(mesh.edge_normals()[inner], nq, axis=0))
        jump = field.evaluate(left, flat) - field.evaluate(right, flat)
        faces = 0.5 * fw.ravel() @ (np.abs(vn) * jump ** 2)
        assert form == pytest.approx(faces - vol, rel=1e-10, abs=1e-12)
        assert form >= -abs(vol)


def test_mass_matrix_diagonal_positive(square10):
    op = build_transport(TriangleSpace(square10, 2), velocity(square10, rotation))
    assert np.all(op.mass > 0)
    assert op.mass.shape == (TriangleSpace(square10, 2).ndofs,)


# -- time step -------------------------------------------------------------------------

def test_cfl_formula():
    mesh = SimpleNamespace(areas=np.array([0.005, 0.02]), diameters=np.array([0.1, 0.2]))
    op = SimpleNamespace(space=SimpleNamespace(degree=2, mesh=mesh), max_speed=1.0, stationary=False)
    # smallest altitude 2 |tau| / diam = 0.1
    assert cfl_dt(op, 0.5) == pytest.approx(0.01)


def test_cfl_range_checked(square10):
    op = build_transport(TriangleSpace(square10, 1), velocity(square10, rotation))
    with pytest.raises(ValueError):
        cfl_dt(op, 1.5)
    with pytest.raises(ValueError):
        cfl_dt(op, 0.0)


def _scalar_operator(lam):
    return SimpleNamespace(rhs_matrix=sp.identity(1) * lam)


@pytest.mark.parametrize("lam, dt", [(-2.0, 0.1), (0.5, 0.3), (-10.0, 0.01)])
def test_heun_on_linear_ode(lam, dt):
    space = SimpleNamespace(n_elements=1, n_local=1, ndofs=1)
    state = LevelSetState(DgField(space, np.ones((1, 1))))
    z = lam * dt
    assert rkdg_step(_scalar_operator(lam), state, dt).field.vector[0] == pytest.approx(1 + z + z * z / 2)
    ssp = rkdg_step(_scalar_operator(lam), state, dt, scheme="ssp3").field.vector[0]
    assert ssp == pytest.approx(1 + z + z * z / 2 + z ** 3 / 6)


def test_bad_step_and_scheme(square10):
    space = TriangleSpace(square10, 1)
    op = build_transport(space, velocity(square10, rotation))
    state = LevelSetState(space.zero_field())
    with pytest.raises(ValueError):
        rkdg_step(op, state, 0.0)
    with pytest.raises(ValueError):
        rkdg_step(op, state, 0.01, scheme="euler")
    with pytest.raises(ValueError):
        LevelSetState(space.zero_field(), time=-1.0)


def test_blow_up_detected(square10):
    space = TriangleSpace(square10, 2)
    op = build_transport(space, velocity(square10, rotation))
    state = initial_state(space, lambda x: np.exp(-20 * (x ** 2).sum(1)))
    with pytest.raises(BlowUpError):
        for _ in range(400):
            state = rkdg_step(op, state, 100 * cfl_dt(op, 1.0))


# -- advection ----------------------------------------------------------------------------

def test_advect_zero_steps_returns_initial(square10):
    space = TriangleSpace(square10, 2)
    op = build_transport(space, velocity(square10, rotation))
    phi = l2_project(lambda x: x[:, 0], space)
    snaps = advect(op, phi, 0.01, 0)
    assert len(snaps) == 1 and np.array_equal(snaps[0].field.coeffs, phi.coeffs)


def test_advect_snapshot_cadence(square10):
    space = TriangleSpace(square10, 1)
    op = build_transport(space, velocity(square10, rotation))
    snaps = advect(op, lambda x: x[:, 0], cfl_dt(op), 23, every=5, also=(1,))
    assert [s.steps for s in snaps] == [0, 1, 5, 10, 15, 20]
    assert all(s.source == "rkdg" for s in snaps[1:])


def _translation_error(n, p):
    mesh = square_mesh(n)
    space = TriangleSpace(mesh, p)
    speed = np.array([1.0, 0.0])
    v = velocity(mesh, lambda x: speed * smooth_cutoff(np.abs(x).max(axis=1), 0.75, 0.2)[:, None])
    op = build_transport(space, v)
    bump = lambda x, c=(-0.3, 0.0): np.exp(-((x[:, 0] - c[0]) ** 2 + (x[:, 1] - c[1]) ** 2) / 0.01)
    T = 0.5
    steps = int(np.ceil(T / cfl_dt(op, 0.3)))
    snaps = advect(op, bump, T / steps, steps, every=steps)
    final = snaps[-1].field
    pts, w, el = space.element_quadrature(8)
    exact = bump(pts, (0.2, 0.0))
    err = np.sqrt(w @ (final.evaluate(el, pts) - exact) ** 2)
    mass = w @ final.evaluate(el, pts) - w @ bump(pts)
    return err, abs(mass)


@pytest.mark.parametrize("p", [1, 2])
def test_translation_harness(p):
    e1, m1 = _translation_error(16, p)
    e2, m2 = _translation_error(32, p)
    assert np.log2(e1 / e2) >= p + 0.5 - 0.3  # smooth data, exact translation
    assert m2 < 1e-3


@pytest.mark.parametrize("mesh", [square_mesh(16), disc_mesh(12)], ids=["square", "disc"])
def test_p0_maximum_principle(mesh):
    space = TriangleSpace(mesh, 0)
    norm = np.sqrt(2 * mesh.areas)
    adj = mesh.triangle_adjacency()
    patch = (adj + adj @ adj + sp.identity(mesh.n_triangles)).tocsr()  # two stages reach two layers
    rng = np.random.default_rng(7)
    for func in (rotation, lambda x: np.column_stack([np.sin(3 * x[:, 1]), np.cos(2 * x[:, 0])])):
        op = build_transport(space, velocity(mesh, func))
        dt = cfl_dt(op, 0.5)
        for _ in range(5):
            means = rng.normal(size=mesh.n_triangles)
            new = rkdg_step(op, LevelSetState(DgField(space, means * norm)), dt).field.vector / norm
            hi = np.array([means[patch[i].indices].max() for i in range(mesh.n_triangles)])
            lo = np.array([means[patch[i].indices].min() for i in range(mesh.n_triangles)])
            assert np.all(new <= hi + 1e-12) and np.all(new >= lo - 1e-12)
