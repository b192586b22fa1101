"""Lattices, triangulations and quadrature rules on the standard simplex.

``Delta_n = {s >= 0, s_1 + ... + s_n <= 1}``.  With the cumulative
coordinates ``y_j = s_j + ... + s_n`` the simplex becomes the order simplex
``1 >= y_1 >= ... >= y_n >= 0``, which the Freudenthal (Kuhn) triangulation
of the cube ``[0, m]^n`` tiles exactly with ``m^n`` congruent simplices.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@lru_cache(maxsize=32)
def lattice(n: int, m: int) -> np.ndarray:
    """Integer points ``k`` with ``k_i >= 0`` and ``sum k <= m``, shape (V, n).

    The order is lexicographic, so results are reproducible.
    """
    if n < 1 or m < 1:
        raise ValueError("n and m must be positive")
    pts = [k for k in itertools.product(range(m + 1), repeat=n) if sum(k) <= m]
    out = np.array(pts, dtype=np.int64)
    out.setflags(write=False)
    return out


def _index_map(n: int, m: int) -> np.ndarray:
    pts = lattice(n, m)
    idx = np.full((m + 1,) * n, -1, dtype=np.int64)
    idx[tuple(pts.T)] = np.arange(len(pts))
    return idx


@lru_cache(maxsize=32)
def kuhn_simplices(n: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Triangulation of ``m * Delta_n`` with lattice vertices.

    Returns ``(simplices, signs)``: vertex indices into :func:`lattice`
    (shape (m^n, n+1)) and the orientation sign of each simplex in
    ``s``-coordinates.
    """
    idx = _index_map(n, m)
    # cells of the y-cube that meet the order simplex have base corners
    # with non-increasing coordinates
    bases = np.array([c for c in itertools.product(range(m), repeat=n)
                      if all(c[j] >= c[j + 1] for j in range(n - 1))], dtype=np.int64)
    eye = np.eye(n, dtype=np.int64)
    simplices = []
    for perm in itertools.permutations(range(n)):
        steps = np.cumsum(eye[list(perm)], axis=0)             # (n, n)
        Y = np.concatenate([bases[:, None, :], bases[:, None, :] + steps[None]], axis=1)
        ok = (Y[..., 0] <= m).all(axis=1) & (Y[..., -1] >= 0).all(axis=1)
        if n > 1:
            ok &= (np.diff(Y, axis=2) <= 0).all(axis=(1, 2))
        Y = Y[ok]
        K = Y.copy()
        K[..., :-1] -= Y[..., 1:]
        simplices.append(idx[tuple(np.moveaxis(K, -1, 0))])
    simp = np.concatenate(simplices, axis=0)
    simp = simp[np.lexsort(simp.T[::-1])]
    if len(simp) != m**n or (simp < 0).any():
        raise AssertionError("triangulation of the simplex is incomplete")  # pragma: no cover
    pts = lattice(n, m)
    E = (pts[simp[:, 1:]] - pts[simp[:, :1]]).transpose(0, 2, 1).astype(float)
    signs = np.sign(np.linalg.det(E)).astype(int)
    simp.setflags(write=False)
    signs.setflags(write=False)
    return simp, signs


@lru_cache(maxsize=32)
def simplex_rule(n: int, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Conical-product Gauss rule on the standard simplex (``q^n`` points).

    Collapsed coordinates ``u_1 = x_1``, ``u_2 = (1-x_1) x_2``, ... turn the
    simplex into the unit cube with weight ``prod (1-x_k)^(n-k)``; each
    factor gets a Gauss-Jacobi rule.  Exact for polynomials of degree
    ``2q - 1``.  Weights sum to ``1/n!``.
    """
    xs, ws = [], []
    for k in range(1, n + 1):
        alpha = n - k
        t, w = roots_jacobi(q, alpha, 0)
        xs.append((t + 1) / 2)
        ws.append(w / 2 ** (alpha + 1))
    X = np.array(list(itertools.product(*xs)))
    W = np.prod(np.array(list(itertools.product(*ws))), axis=1)
    U = np.empty_like(X)
    rem = np.ones(len(X))
    for k in range(n):
        U[:, k] = rem * X[:, k]
        rem = rem * (1 - X[:, k])
    U.setflags(write=False)
    W.setflags(write=False)
    return U, W


def grading(x, p: float = 1.0):
    """Monotone map of [0, 1] onto itself, ``x^p / (x^p + (1-x)^p)``.

    ``p > 1`` clusters points toward both ends (spacing ``~ m^-p`` there).
    """
    x = np.asarray(x, dtype=float)
    a, b = x**p, (1.0 - x) ** p
    return a / (a + b)


@lru_cache(maxsize=32)
def graded_points(n: int, m: int, p: float = 1.0) -> np.ndarray:
    """Points of :func:`lattice` mapped into ``Delta_n`` with graded spacing.

    Each cumulative coordinate ``y_j = s_j + ... + s_n`` becomes
    ``grading(y_j, p)``.  The same map acts on every coordinate, so the Kuhn
    simplices stay a triangulation with unchanged orientation, the faces
    ``s_i = 0`` and ``sum s = 1`` are preserved, and the even sub-lattice of
    level ``m`` is level ``m/2``.
    """
    k = lattice(n, m)
    y = grading(np.cumsum(k[:, ::-1], axis=1)[:, ::-1] / m, p)
    s = y.copy()
    s[:, :-1] -= y[:, 1:]
    s[k == 0] = 0.0
    s.setflags(write=False)
    return s


def simplex_volume(n: int) -> float:
    return 1.0 / math.factorial(n)
