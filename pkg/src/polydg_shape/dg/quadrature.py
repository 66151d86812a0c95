"""Quadrature rules on the reference triangle and on straight segments."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

# Symmetric 6-point rule of degree 4 (Dunavant), barycentric orbits.
_D4_A = (0.445948490915965, 0.091576213509771)
_D4_W = (0.223381589678011, 0.109951743655322)


@dataclass(frozen=True)
class QuadratureRule:
    """Points and positive weights; weights carry the area/length measure."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))


def _dunavant4() -> tuple[np.ndarray, np.ndarray]:
    pts, wts = [], []
    for a, w in zip(_D4_A, _D4_W):
        b = 1.0 - 2.0 * a
        for bary in ((a, a, b), (a, b, a), (b, a, a)):
            pts.append((bary[1], bary[2]))
            wts.append(0.5 * w)
    return np.array(pts), np.array(wts)


def _collapsed_gauss(degree: int) -> tuple[np.ndarray, np.ndarray]:
    n = degree // 2 + 1
    tj, wj = roots_jacobi(n, 1.0, 0.0)
    tl, wl = np.polynomial.legendre.leggauss(n)
    u = 0.5 * (1.0 + tj)
    v = 0.5 * (1.0 + tl)
    wu = 0.25 * wj
    wv = 0.5 * wl
    U, V = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wu, wv)
    pts = np.column_stack([U.ravel(), (V * (1.0 - U)).ravel()])
    return pts, W.ravel()


@lru_cache(maxsize=None)
def reference_triangle_rule(degree: int = 4) -> QuadratureRule:
    """Rule on the triangle (0,0),(1,0),(0,1), exact up to ``degree``."""
    if degree < 0:
        raise ValueError("degree must be non-negative")
    if degree <= 1:
        return QuadratureRule(np.array([[1 / 3, 1 / 3]]), np.array([0.5]), 1)
    if degree <= 4:
        pts, wts = _dunavant4()
        return QuadratureRule(pts, wts, 4)
    pts, wts = _collapsed_gauss(degree)
    return QuadratureRule(pts, wts, degree)


@lru_cache(maxsize=None)
def reference_segment_rule(degree: int = 4) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1] exact up to ``degree``."""
    n = max(1, (degree + 2) // 2)
    t, w = np.polynomial.legendre.leggauss(n)
    return QuadratureRule(0.5 * (t + 1.0), 0.5 * w, 2 * n - 1)


def map_triangle_rule(tri_coords: np.ndarray, degree: int = 4):
    """Map the reference rule onto many triangles at once.

    ``tri_coords`` has shape (nt, 3, 2). Returns points (nt, nq, 2) and
    weights (nt, nq) scaled by the triangle areas.
    """
    rule = reference_triangle_rule(degree)
    a = tri_coords[:, 0, :]
    e1 = tri_coords[:, 1, :] - a
    e2 = tri_coords[:, 2, :] - a
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    pts = (a[:, None, :] + rule.points[None, :, 0, None] * e1[:, None, :]
           + rule.points[None, :, 1, None] * e2[:, None, :])
    wts = np.abs(det)[:, None] * rule.weights[None, :]
    return pts, wts


def map_segment_rule(p0: np.ndarray, p1: np.ndarray, degree: int = 4):
    """Map the Gauss rule onto segments p0->p1 (arrays (ns, 2)).

    Returns points (ns, nq, 2), weights (ns, nq) scaled by segment length.
    """
    rule = reference_segment_rule(degree)
    d = p1 - p0
    length = np.hypot(d[:, 0], d[:, 1])
    pts = p0[:, None, :] + rule.points[None, :, None] * d[:, None, :]
    wts = length[:, None] * rule.weights[None, :]
    return pts, wts
