"""Face quadrature, jump/average algebra and the penalty parameter."""
from __future__ import annotations

import numpy as np

from ..mesh.polytopic import Faces, PolytopicMesh
from .quadrature import map_segment_rule


def face_quadrature(faces: Faces, degree: int = 4, ids=None):
    """Gauss points on faces: points (nf, nq, 2), weights (nf, nq)."""
    if ids is None:
        return map_segment_rule(faces.p0, faces.p1, degree)
    return map_segment_rule(faces.p0[ids], faces.p1[ids], degree)


def jump_average(normal, plus, minus=None):
    """Average and jump across a face with normal ``normal`` (out of the + side).

    Scalars: average is a scalar and the jump a vector ``(psi+ - psi-) n``.
    Vectors (last axis of length 2): average is a vector and the jump the
    scalar ``(Psi+ - Psi-) . n``. Without ``minus`` the face is treated as a
    boundary face: average = trace, jump = trace times the normal.
    """
    normal = np.asarray(normal, dtype=float)
    plus = np.asarray(plus, dtype=float)
    boundary = minus is None
    minus = np.zeros_like(plus) if boundary else np.asarray(minus, dtype=float)
    avg = plus if boundary else 0.5 * (plus + minus)
    diff = plus - minus
    vector = plus.ndim >= 1 and plus.shape[-1] == 2 and plus.ndim == normal.ndim
    if vector:
        jump = np.sum(diff * normal, axis=-1)
    else:
        jump = diff[..., None] * normal
    return avg, jump


def sigma_value(C_sigma: float, p: int, length, h_plus, h_minus=None):
    """``C p^2 |e| / h^2`` with ``h`` the smaller of the incident sizes."""
    if C_sigma <= 0:
        raise ValueError("C_sigma must be positive")
    inv_h2 = 1.0 / np.asarray(h_plus, dtype=float) ** 2
    if h_minus is not None:
        h_minus = np.asarray(h_minus, dtype=float)
        inv_h2 = np.where(np.isnan(h_minus), inv_h2, np.maximum(inv_h2, 1.0 / h_minus**2))
    return C_sigma * p**2 * np.asarray(length, dtype=float) * inv_h2


def penalty_sigma(mesh: PolytopicMesh, C_sigma: float, p: int, ids=None) -> np.ndarray:
    """Star-shaped penalty ``C p^2 |e| / h_T^2``, maximised over both sides.

    ``|e|`` is the length of the full interface between the two elements
    (all straight pieces together), see ``Faces.interface_lengths``.
    ``h_T`` is the diameter, capped by ``2 sqrt|T|`` so that thin slivers
    (which are not star-shaped with respect to a large ball) still get a
    coercive penalty; for shape-regular elements the cap is inactive.
    """
    f = mesh.faces
    ids = np.arange(len(f)) if ids is None else np.asarray(ids)
    el = f.elements[ids]
    h = effective_size(mesh)
    h_minus = np.where(el[:, 1] >= 0, h[np.maximum(el[:, 1], 0)], np.nan)
    length = f.lengths if f.interface_lengths is None else f.interface_lengths
    return sigma_value(C_sigma, p, length[ids], h[el[:, 0]], h_minus)


def effective_size(mesh: PolytopicMesh) -> np.ndarray:
    return np.minimum(mesh.diameters, 2.0 * np.sqrt(mesh.areas))
