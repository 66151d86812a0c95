"""Explicit Runge-Kutta dG transport of the level-set function."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .dg.bases import triangle_orthonormal
from .dg.quadrature import reference_segment_rule
from .dg.space import DgField, TriangleSpace, l2_project
from .recovery import ContinuousField, lagrange_shape

STATIONARY_SPEED = 1e-14


class BlowUpError(FloatingPointError):
    pass


@dataclass
class TransportOperator:
    """Upwind dG discretisation of ``d/dt phi + V . grad phi = 0``.

    ``stiffness`` holds the element matrices K (volume advection and inflow
    face coupling), ``mass`` the diagonal of M, ``rhs_matrix`` = -M^{-1} K.
    """

    space: TriangleSpace
    velocity: ContinuousField
    stiffness: sp.csr_matrix
    mass: np.ndarray
    rhs_matrix: sp.csr_matrix
    max_speed: float

    @property
    def stationary(self) -> bool:
        return self.max_speed < STATIONARY_SPEED

    def apply(self, coeffs: np.ndarray) -> np.ndarray:
        return self.rhs_matrix @ coeffs


@dataclass
class LevelSetState:
    field: DgField
    time: float = 0.0
    steps: int = 0
    source: str = field(default="initial")

    def __post_init__(self):
        if self.time < 0:
            raise ValueError("time must be non-negative")


def build_transport(space: TriangleSpace, velocity: ContinuousField, degree: int | None = None,
                    boundary_tol: float = 1e-10) -> TransportOperator:
    """Assemble the per-element mass and advection matrices.

    Faces are classified point by point: wherever ``V . n < 0`` on the
    boundary of a triangle, the upwind jump against the neighbour enters
    its equation. The velocity must vanish on the hold-all boundary.
    """
    mesh = space.mesh
    if velocity.mesh is not mesh and velocity.mesh.n_vertices != mesh.n_vertices:
        raise ValueError("velocity lives on a different mesh")
    vel = velocity.values
    if vel.ndim != 2 or vel.shape[1] != 2:
        raise ValueError("velocity must be a 2-component field")
    bmax = np.abs(vel[velocity.boundary_nodes()]).max(initial=0.0)
    if bmax > boundary_tol:
        raise ValueError(f"velocity must vanish on the boundary (max |V| = {bmax:.2e})")
    p = space.degree
    k = space.n_local
    if degree is None:
        degree = max(4, 2 * p + velocity.degree)
    nt = space.n_elements
    local_nodes = velocity.local_nodes

    # volume part
    ref, val, grads, wts, _ = space.reference_tables(degree)
    lag, _ = lagrange_shape(velocity.degree, ref)
    vq = np.einsum("ql,tlc->tqc", lag, vel[local_nodes])  # (nt, nq, 2)
    adv = np.einsum("tqc,tqjc->tqj", vq, grads)  # V . grad psi_j
    vol = np.einsum("tq,qi,tqj->tij", wts, val, adv)
    max_speed = float(np.sqrt((vq**2).sum(-1)).max(initial=0.0))

    rows = [np.repeat(space.dofs(np.arange(nt)), k, axis=1).ravel()]
    cols = [np.tile(space.dofs(np.arange(nt)), (1, k)).ravel()]
    data = [vol.ravel()]

    inner = np.flatnonzero(~mesh.boundary_edge)
    if len(inner):
        rule = reference_segment_rule(degree)
        e = mesh.edges[inner]
        p0, p1 = mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]]
        length = mesh.edge_lengths[inner]
        pts = p0[:, None, :] + rule.points[None, :, None] * (p1 - p0)[:, None, :]
        w = length[:, None] * rule.weights[None, :]
        nq = len(rule.points)
        left, right = mesh.edge_tris[inner, 0], mesh.edge_tris[inner, 1]
        normal = mesh.edge_normals()[inner]
        flat = pts.reshape(-1, 2)
        rl = space.to_reference(np.repeat(left, nq), flat)
        rr = space.to_reference(np.repeat(right, nq), flat)
        vl = triangle_orthonormal(p, rl)[0].reshape(len(inner), nq, k)
        vr = triangle_orthonormal(p, rr)[0].reshape(len(inner), nq, k)
        lagl, _ = lagrange_shape(velocity.degree, rl)
        vface = np.einsum("nl,nlc->nc", lagl, vel[local_nodes[np.repeat(left, nq)]])
        un = np.einsum("fqc,fc->fq", vface.reshape(len(inner), nq, 2), normal)
        wl = w * np.minimum(un, 0.0)  # inflow into left: V.n_L < 0
        wr = w * np.minimum(-un, 0.0)  # inflow into right: V.n_R < 0
        blocks = [
            (left, left, -np.einsum("fq,fqi,fqj->fij", wl, vl, vl)),
            (left, right, np.einsum("fq,fqi,fqj->fij", wl, vl, vr)),
            (right, right, -np.einsum("fq,fqi,fqj->fij", wr, vr, vr)),
            (right, left, np.einsum("fq,fqi,fqj->fij", wr, vr, vl)),
        ]
        for ei, ej, blk in blocks:
            rows.append(np.repeat(space.dofs(ei), k, axis=1).ravel())
            cols.append(np.tile(space.dofs(ej), (1, k)).ravel())
            data.append(blk.ravel())

    n = space.ndofs
    stiff = sp.coo_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n, n)).tocsr()
    mass = space.mass_diagonal()
    rhs = (-sp.diags(1.0 / mass) @ stiff).tocsr()
    return TransportOperator(space, velocity, stiff, mass, rhs, max_speed)


def cfl_dt(operator: TransportOperator, cfl: float = 0.3) -> float:
    """``cfl * h_min / ((2p + 1) max|V|)``; ``inf`` when the flow is stationary.

    ``h`` is the smallest altitude ``2 |tau| / diam(tau)``. With it, p = 0 and
    ``cfl <= 0.5`` keep each Euler stage a convex combination of upwind cell
    means (a discrete maximum principle) on any triangle shape.
    """
    if not 0 < cfl <= 1:
        raise ValueError("cfl must lie in (0, 1]")
    if operator.stationary:
        return math.inf
    p = operator.space.degree
    mesh = operator.space.mesh
    h = (2.0 * mesh.areas / mesh.diameters).min()
    return cfl * h / ((2 * p + 1) * operator.max_speed)


def rkdg_step(operator: TransportOperator, state: LevelSetState, dt: float,
              scheme: str = "heun") -> LevelSetState:
    """Advance one explicit step (Heun by default, ``"ssp3"`` for SSP-RK3)."""
    if not dt > 0:
        raise ValueError("time step must be positive")
    u = state.field.vector
    L = operator.rhs_matrix
    if scheme == "heun":
        k1 = L @ u
        k2 = L @ (u + dt * k1)
        new = u + 0.5 * dt * (k1 + k2)
    elif scheme == "ssp3":
        u1 = u + dt * (L @ u)
        u2 = 0.75 * u + 0.25 * (u1 + dt * (L @ u1))
        new = u / 3.0 + 2.0 / 3.0 * (u2 + dt * (L @ u2))
    else:
        raise ValueError(f"unknown time stepping scheme {scheme!r}")
    if not np.all(np.isfinite(new)):
        raise BlowUpError("non-finite level-set values; time step violates the CFL limit")
    return LevelSetState(DgField(state.field.space, new), state.time + dt, state.steps + 1, "rkdg")


def initial_state(space: TriangleSpace, phi0) -> LevelSetState:
    """Wrap ``phi0`` (DgField, ContinuousField or callable) as a state in ``space``."""
    if isinstance(phi0, LevelSetState):
        return phi0
    if isinstance(phi0, DgField):
        if phi0.space is not space and phi0.space.ndofs != space.ndofs:
            raise ValueError("initial field does not belong to the transport space")
        return LevelSetState(DgField(space, phi0.coeffs))
    if isinstance(phi0, ContinuousField):
        return LevelSetState(phi0.to_dg(space))
    return LevelSetState(l2_project(phi0, space, degree=max(4, 2 * space.degree + 2)))


def advect(operator: TransportOperator, phi0, dt: float, m_steps: int, every: int = 5,
           also=(), scheme: str = "heun") -> list[LevelSetState]:
    """Run ``m_steps`` steps, keeping the states at multiples of ``every``.

    The initial state is always the first snapshot; step counts listed in
    ``also`` are recorded as well.
    """
    state = initial_state(operator.space, phi0)
    snaps = [state]
    keep = set(also)
    for n in range(1, m_steps + 1):
        state = rkdg_step(operator, state, dt, scheme)
        if n % every == 0 or n in keep:
            snaps.append(state)
    return snaps
