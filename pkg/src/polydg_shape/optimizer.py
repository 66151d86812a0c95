"""Steepest-descent level-set optimisation with backtracking Armijo steps."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .dg.space import DgField, LegendreBoxSpace, TriangleSpace, l2_project
from .elliptic import DEFAULT_C_SIGMA, assemble_ipdg, solve_shape_gradient
from .levelset import BlowUpError, LevelSetState, advect, build_transport, cfl_dt
from .mesh.agglomerate import agglomerate_total
from .mesh.generators import disc_mesh, square_mesh
from .mesh.refine import FittedMesh, refine_to_fit
from .mesh.simplicial import MeshError, SimplicialMesh
from .recovery import (ContinuousField, inject_polytopic_to_simplicial, node_coordinates,
                       recover_nodal_average)
from .shape_calc import (BernoulliProblem, Circle, ImplicitCurve, UnconstrainedProblem, cassini,
                         cassini_grad, dJ_rhs_bernoulli, dJ_rhs_unconstrained, objective_bernoulli,
                         objective_unconstrained, solve_bernoulli_state, zero_level_set_distance)

log = logging.getLogger(__name__)

ZERO_GRADIENT = 1e-12


class DegenerateIterate(RuntimeError):
    """The shape vanished or filled the whole hold-all domain."""


# -- initial level sets -------------------------------------------------------

def disc_level_set(radius: float = 0.51):
    return lambda x: np.hypot(x[:, 0], x[:, 1]) - radius


def two_holes_level_set(x: np.ndarray) -> np.ndarray:
    """Perforated disc: positive inside two ovals around (+-0.6, 0)."""
    prod = ((x[:, 0] - 0.6) ** 2 + x[:, 1] ** 2) * ((x[:, 0] + 0.6) ** 2 + x[:, 1] ** 2)
    return 0.55 - prod**0.25


def smiley_level_set(x: np.ndarray) -> np.ndarray:
    """Perforated disc with two eye holes and a crescent mouth hole."""
    eye1 = np.hypot(x[:, 0] - 0.3, x[:, 1] - 0.3) - 0.2
    eye2 = np.hypot(x[:, 0] + 0.3, x[:, 1] - 0.3) - 0.2
    r = np.hypot(x[:, 0], x[:, 1] - 0.1)
    mouth = np.maximum(np.abs(r - 0.5) - 0.1, x[:, 1] + 0.02)
    return -np.minimum(np.minimum(eye1, eye2), mouth)


INITIAL_LEVEL_SETS: dict[str, Callable] = {
    "disc": disc_level_set(0.51),
    "two_holes": two_holes_level_set,
    "smiley": smiley_level_set,
}


def zero_function(x):
    return np.zeros(len(x))


def zero_gradient(x):
    return np.zeros((len(x), 2))


INTEGRANDS = {"cassini": (cassini, cassini_grad), "zero": (zero_function, zero_gradient)}


# -- configuration ------------------------------------------------------------

@dataclass
class OptimizerConfig:
    problem: str = "unconstrained"
    mesh: dict = field(default_factory=lambda: {"kind": "square", "n": 30})
    degree: int = 2
    dt: float | None = 1.0 / 2600.0
    cfl: float = 0.3
    max_steps: int = 150
    armijo_c: float = 0.01
    max_iterations: int = 80
    polytopes: int = 200
    seed: int = 0
    C_sigma: float = DEFAULT_C_SIGMA
    initial: str = "disc"
    integrand: str = "cassini"
    reference: dict | None = None
    scheme: str = "heun"
    snapshot_every: int = 5

    def __post_init__(self):
        if self.problem not in ("unconstrained", "bernoulli"):
            raise ValueError(f"unknown problem kind {self.problem!r}")
        if not 0 < self.armijo_c < 1:
            raise ValueError("Armijo constant must lie in (0, 1)")
        if self.max_steps < 5:
            raise ValueError("need at least M = 5 time steps per iteration")
        if self.degree not in (1, 2):
            raise ValueError("polynomial degree must be 1 or 2")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("time step must be positive")
        if self.initial not in INITIAL_LEVEL_SETS:
            raise ValueError(f"unknown initial level set {self.initial!r}")
        if self.integrand not in INTEGRANDS:
            raise ValueError(f"unknown integrand {self.integrand!r}")

    @classmethod
    def unconstrained(cls, **kw) -> "OptimizerConfig":
        base = dict(problem="unconstrained", mesh={"kind": "square", "n": 30}, dt=1 / 2600,
                    max_steps=150, initial="disc")
        base.update(kw)
        return cls(**base)

    @classmethod
    def bernoulli(cls, **kw) -> "OptimizerConfig":
        base = dict(problem="bernoulli", mesh={"kind": "disc", "rings": 18, "triangles": 2085},
                    dt=1 / 1000, max_steps=100, initial="two_holes")
        base.update(kw)
        return cls(**base)


def build_base_mesh(spec: dict) -> SimplicialMesh:
    kind = spec.get("kind", "square")
    if kind == "square":
        return square_mesh(int(spec.get("n", 30)), float(spec.get("half_width", 1.0)))
    if kind == "disc":
        return disc_mesh(int(spec.get("rings", 18)), float(spec.get("radius", 1.0)),
                         target_triangles=spec.get("triangles"))
    raise ValueError(f"unknown mesh kind {kind!r}")


def reference_curve(config: OptimizerConfig):
    ref = config.reference
    if ref is None:
        ref = {"kind": "cassini"} if config.problem == "unconstrained" else {"kind": "circle", "radius": 0.55}
    if ref["kind"] == "circle":
        return Circle(ref["radius"], ref.get("center", (0.0, 0.0)))
    if ref["kind"] == "cassini":
        return ImplicitCurve(cassini, cassini_grad)
    if ref["kind"] == "none":
        return None
    raise ValueError(f"unknown reference curve {ref['kind']!r}")


# -- history ------------------------------------------------------------------

@dataclass
class IterationRecord:
    iteration: int
    n: int
    t: float
    J: float
    grad_norm_sq: float
    accepted_steps: int
    zls_distance: float
    components: int
    holes: int
    level_set_slope: float
    wall_time: float = 0.0


CSV_COLUMNS = ("iteration", "n", "t", "J", "grad_norm_sq", "accepted_m", "zls_distance")


@dataclass
class OptimizationHistory:
    records: list[IterationRecord] = field(default_factory=list)
    stop_reason: str = ""
    reinitialized: bool = False
    final_J: float = math.nan
    final_t: float = 0.0
    final_distance: float = math.nan
    final_components: int = 0
    final_holes: int = 0

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    @property
    def gradient_evaluations(self) -> int:
        return len(self.records)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(CSV_COLUMNS)
            for r in self.records:
                w.writerow([r.iteration, r.n, f"{r.t:.12g}", f"{r.J:.12g}", f"{r.grad_norm_sq:.12g}",
                            r.accepted_steps, f"{r.zls_distance:.12g}"])

    def as_dicts(self) -> list[dict]:
        return [asdict(r) for r in self.records]


# -- Armijo -------------------------------------------------------------------

def armijo_holds(J: float, J0: float, steps: int, dt: float, c: float, grad_norm_sq: float) -> bool:
    return J <= J0 - c * steps * dt * grad_norm_sq


def armijo_select(J0: float, grad_norm_sq: float, dt: float, c: float, J_at_multiples,
                  J_single: float | None = None, every: int = 5) -> int | None:
    """Largest accepted step count from the grid ``every, 2 every, ...``.

    ``J_at_multiples[j]`` is the objective after ``(j + 1) * every`` steps.
    If no multiple passes, a single step is tried (when given); ``None``
    means rejection, which stops the optimisation.
    """
    for j in range(len(J_at_multiples) - 1, -1, -1):
        steps = (j + 1) * every
        if armijo_holds(J_at_multiples[j], J0, steps, dt, c, grad_norm_sq):
            return steps
    if J_single is not None and armijo_holds(J_single, J0, 1, dt, c, grad_norm_sq):
        return 1
    return None


# -- pipeline -----------------------------------------------------------------

@dataclass
class Iterate:
    """Everything computed for one level-set iterate."""

    phi: ContinuousField
    fitted: FittedMesh
    J: float
    poly: object = None
    state: object = None


class ShapeOptimizer:
    """Orchestrates fitting, agglomeration, gradient solve, transport and line search."""

    def __init__(self, config: OptimizerConfig):
        self.config = config
        self.base = build_base_mesh(config.mesh)
        self.space = TriangleSpace(self.base, config.degree)
        if config.problem == "unconstrained":
            f, gf = INTEGRANDS[config.integrand]
            self.problem = UnconstrainedProblem(f, gf)
        else:
            self.problem = BernoulliProblem(C_sigma=config.C_sigma)
        self.reference = reference_curve(config)
        self._base_nodes = node_coordinates(self.base, 2)

    # level set helpers
    def initial_field(self) -> DgField:
        func = INITIAL_LEVEL_SETS[self.config.initial]
        return l2_project(func, self.space, degree=max(4, 2 * self.config.degree + 2))

    def recover(self, phi: DgField) -> ContinuousField:
        return recover_nodal_average(phi, zero_boundary=False)

    def fit(self, phi_c: ContinuousField) -> FittedMesh:
        fitted = refine_to_fit(self.base, phi_c)
        n_in = int(fitted.inside.sum())
        if n_in == 0:
            raise DegenerateIterate("the shape {phi < 0} is empty")
        if n_in == fitted.n_triangles:
            raise DegenerateIterate("the shape {phi < 0} fills the hold-all domain")
        return fitted

    def evaluate(self, phi: DgField, full: bool = True) -> Iterate:
        """Objective of an iterate; ``full`` also keeps the polytopic mesh and state."""
        cfg = self.config
        phi_c = self.recover(phi)
        fitted = self.fit(phi_c)
        if isinstance(self.problem, UnconstrainedProblem):
            J = objective_unconstrained(fitted, self.problem.f)
            poly = agglomerate_total(fitted, cfg.polytopes, cfg.seed) if full else None
            return Iterate(phi_c, fitted, J, poly)
        poly = agglomerate_total(fitted, cfg.polytopes, cfg.seed)
        state = solve_bernoulli_state(poly, cfg.degree, self.problem)
        J = objective_bernoulli(state.sub, state.u, self.problem.eta)
        return Iterate(phi_c, fitted, J, poly, state)

    def shape_gradient(self, it: Iterate):
        """Returns (g components, grad_norm_sq, descent velocity on the base mesh, polytopic space)."""
        cfg = self.config
        space = LegendreBoxSpace(it.poly, cfg.degree)
        if isinstance(self.problem, UnconstrainedProblem):
            rhs = dJ_rhs_unconstrained(space, self.problem.f, self.problem.grad_f)
        else:
            rhs = dJ_rhs_bernoulli(space, it.state.on_parent(space), self.problem.eta)
        op = assemble_ipdg(space, cfg.C_sigma, include_mass=True)
        g = solve_shape_gradient(op, rhs)
        grad_norm_sq = float(sum(rhs[:, i] @ g[i].vector for i in range(2)))
        vec = DgField(space, np.stack([gi.coeffs for gi in g], axis=-1))
        fine = recover_nodal_average(inject_polytopic_to_simplicial(vec), degree=cfg.degree)
        values = -fine.evaluate(self._base_nodes)
        V = ContinuousField(self.base, 2, values)
        V.values[V.boundary_nodes()] = 0.0
        return g, grad_norm_sq, V, fine

    def distance(self, it: Iterate) -> float:
        if self.reference is None:
            return math.nan
        return zero_level_set_distance(it.fitted, self.reference)

    def level_set_slope(self, it: Iterate) -> float:
        pts = it.fitted.interface_points()
        g = it.phi.gradient(pts)
        return float(np.median(np.sqrt((g**2).sum(-1))))

    def objective_or_inf(self, phi: DgField) -> float:
        try:
            return self.evaluate(phi, full=False).J
        except (DegenerateIterate, MeshError):
            return math.inf

    # main loop
    def run(self, on_iteration: Callable | None = None) -> OptimizationHistory:
        cfg = self.config
        hist = OptimizationHistory()
        state = LevelSetState(self.initial_field())
        t = 0.0
        start = time.perf_counter()
        try:
            it = self.evaluate(state.field)
        except DegenerateIterate as exc:
            hist.stop_reason = f"degenerate: {exc}"
            return hist
        for k in range(cfg.max_iterations):
            g, gn, V, fine_grad = self.shape_gradient(it)
            record = IterationRecord(k, k + 1, t, it.J, gn, 0, self.distance(it),
                                     it.fitted.connected_component_count(it.fitted.inside),
                                     it.fitted.connected_component_count(~it.fitted.inside),
                                     self.level_set_slope(it), time.perf_counter() - start)
            hist.records.append(record)
            log.info("iter %d J=%.6g |g|^2=%.3g dist=%.4g comps=%d holes=%d", k, it.J, gn,
                     record.zls_distance, record.components, record.holes)
            if on_iteration is not None:
                on_iteration(k, it, V, fine_grad)
            if math.sqrt(max(gn, 0.0)) < ZERO_GRADIENT:
                hist.stop_reason = "zero gradient"
                break
            op = build_transport(self.space, V)
            if op.stationary:
                hist.stop_reason = "zero gradient"
                break
            dt = cfg.dt if cfg.dt is not None else cfl_dt(op, cfg.cfl)
            try:
                snaps = advect(op, state, dt, cfg.max_steps, every=cfg.snapshot_every, also=(1,))
            except BlowUpError as exc:
                raise RuntimeError(f"iteration {k}: {exc}") from exc
            by_steps = {s.steps: s for s in snaps}
            accepted = None
            multiples = [s for s in sorted(by_steps) if s > 0 and s % cfg.snapshot_every == 0]
            for steps in reversed(multiples):
                J = self.objective_or_inf(by_steps[steps].field)
                if armijo_holds(J, it.J, steps, dt, cfg.armijo_c, gn):
                    accepted = steps
                    break
            if accepted is None:
                J1 = self.objective_or_inf(by_steps[1].field)
                if armijo_holds(J1, it.J, 1, dt, cfg.armijo_c, gn):
                    accepted = 1
            if accepted is None:
                hist.stop_reason = "armijo rejection"
                break
            new_state = by_steps[accepted]
            if new_state.source != "rkdg":  # only transport snapshots may overwrite phi
                hist.reinitialized = True
            record.accepted_steps = accepted
            state = LevelSetState(new_state.field, state.time + new_state.time, 0, new_state.source)
            t += accepted * dt
            try:
                it = self.evaluate(state.field)
            except DegenerateIterate as exc:
                hist.stop_reason = f"degenerate: {exc}"
                break
        else:
            hist.stop_reason = "max iterations"
        hist.final_J = it.J
        hist.final_t = t
        hist.final_distance = self.distance(it)
        hist.final_components = it.fitted.connected_component_count(it.fitted.inside)
        hist.final_holes = it.fitted.connected_component_count(~it.fitted.inside)
        self.final_iterate = it
        self.final_state = state
        return hist


def optimize(config: OptimizerConfig, on_iteration: Callable | None = None) -> OptimizationHistory:
    return ShapeOptimizer(config).run(on_iteration)
