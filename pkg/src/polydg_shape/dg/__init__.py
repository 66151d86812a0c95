"""Broken polynomial spaces, quadrature, face algebra and the SPD solver."""
from .linalg import ConvergenceError, solve_spd
from .space import DgField, LegendreBoxSpace, SingularMassError, TriangleSpace, l2_project

__all__ = ["ConvergenceError", "DgField", "LegendreBoxSpace", "SingularMassError", "TriangleSpace",
           "l2_project", "solve_spd"]
