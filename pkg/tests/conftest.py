import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from polydg_shape.mesh.agglomerate import agglomerate_total
from polydg_shape.mesh.generators import disc_mesh, square_mesh
from polydg_shape.mesh.refine import refine_to_fit

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# Lines collected by the acceptance tests, printed once at the end of the run.
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    def add(criterion: str, ok: bool, detail: str):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def circle_phi(radius, center=(0.0, 0.0)):
    c = np.asarray(center)
    return lambda x: np.hypot(x[:, 0] - c[0], x[:, 1] - c[1]) - radius


@pytest.fixture(scope="session")
def square10():
    return square_mesh(10)


@pytest.fixture(scope="session")
def fitted_disc():
    """Square n=16 fitted to the circle of radius 0.51."""
    base = square_mesh(16)
    return refine_to_fit(base, circle_phi(0.51)(base.vertices))


@pytest.fixture(scope="session")
def poly_disc(fitted_disc):
    return agglomerate_total(fitted_disc, 40, seed=0)


@pytest.fixture(scope="session")
def fitted_annulus():
    """Unit disc (about 2000 triangles) fitted to the annulus 0.55 < r < 1."""
    base = disc_mesh(18, target_triangles=2085)
    return refine_to_fit(base, 0.55 - np.hypot(*base.vertices.T))
