"""Local polynomial bases: tensor Legendre on boxes, orthonormal on triangles."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .quadrature import reference_triangle_rule


def legendre(p: int, t: np.ndarray):
    """Legendre polynomials L_0..L_p and derivatives at points ``t``."""
    t = np.asarray(t, dtype=float)
    val = np.empty(t.shape + (p + 1,))
    der = np.empty_like(val)
    val[..., 0] = 1.0
    der[..., 0] = 0.0
    if p >= 1:
        val[..., 1] = t
        der[..., 1] = 1.0
    for n in range(1, p):
        val[..., n + 1] = ((2 * n + 1) * t * val[..., n] - n * val[..., n - 1]) / (n + 1)
        der[..., n + 1] = der[..., n - 1] + (2 * n + 1) * val[..., n]
    return val, der


def box_legendre(p: int, points: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    """Tensor Legendre basis L2-normalised on the box [lo, hi].

    ``points``, ``lo``, ``hi`` are (n, 2) arrays (one box per point). Mode
    ``a * (p + 1) + b`` is L_a(x) L_b(y); mode 0 is the constant.
    Returns values (n, (p+1)^2) and gradients (n, (p+1)^2, 2).
    """
    ext = hi - lo
    xi = (2.0 * points - (lo + hi)) / ext
    vx, dx = legendre(p, xi[:, 0])
    vy, dy = legendre(p, xi[:, 1])
    norm = np.sqrt(2.0 * np.arange(p + 1) + 1.0)
    scale = 1.0 / np.sqrt(ext[:, 0] * ext[:, 1])
    vx, dx = vx * norm, dx * norm * (2.0 / ext[:, 0])[:, None]
    vy, dy = vy * norm, dy * norm * (2.0 / ext[:, 1])[:, None]
    n = len(points)
    val = (vx[:, :, None] * vy[:, None, :]).reshape(n, -1) * scale[:, None]
    gx = (dx[:, :, None] * vy[:, None, :]).reshape(n, -1) * scale[:, None]
    gy = (vx[:, :, None] * dy[:, None, :]).reshape(n, -1) * scale[:, None]
    return val, np.stack([gx, gy], axis=-1)


def _monomial_exponents(p: int):
    return [(n - j, j) for n in range(p + 1) for j in range(n + 1)]


def _monomials(p: int, ref: np.ndarray):
    exps = _monomial_exponents(p)
    x, y = ref[:, 0], ref[:, 1]
    powx = np.stack([x**k for k in range(p + 1)], axis=1)
    powy = np.stack([y**k for k in range(p + 1)], axis=1)
    val = np.stack([powx[:, i] * powy[:, j] for i, j in exps], axis=1)
    gx = np.stack([i * powx[:, i - 1] * powy[:, j] if i else np.zeros(len(x)) for i, j in exps], axis=1)
    gy = np.stack([j * powx[:, i] * powy[:, j - 1] if j else np.zeros(len(x)) for i, j in exps], axis=1)
    return val, np.stack([gx, gy], axis=-1)


@lru_cache(maxsize=None)
def _orthonormal_coefficients(p: int) -> np.ndarray:
    rule = reference_triangle_rule(2 * p)
    m, _ = _monomials(p, rule.points)
    gram = (m * rule.weights[:, None]).T @ m
    chol = np.linalg.cholesky(gram)
    return np.linalg.inv(chol)


def triangle_orthonormal(p: int, ref: np.ndarray):
    """Hierarchical orthonormal basis of P_p on the reference triangle.

    Obtained by Gram-Schmidt of graded monomials, so it spans the same
    nested spaces as the Dubiner basis. Returns values (n, dim) and
    reference gradients (n, dim, 2).
    """
    c = _orthonormal_coefficients(p)
    m, g = _monomials(p, np.asarray(ref, dtype=float).reshape(-1, 2))
    return m @ c.T, np.einsum("kj,njd->nkd", c, g)


def triangle_dim(p: int) -> int:
    return (p + 1) * (p + 2) // 2
