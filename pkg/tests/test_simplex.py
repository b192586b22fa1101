import itertools
import math

import numpy as np
import pytest

from resurgence.simplex import graded_points, kuhn_simplices, lattice, simplex_rule, simplex_volume


@pytest.mark.parametrize("n, m", [(1, 5), (2, 4), (3, 3), (4, 2)])
def test_lattice_count(n, m):
    assert len(lattice(n, m)) == math.comb(m + n, n)


@pytest.mark.parametrize("n, m", [(1, 4), (2, 4), (3, 3), (4, 2)])
def test_kuhn_tiles_the_simplex(n, m):
    simp, signs = kuhn_simplices(n, m)
    assert len(simp) == m**n
    pts = lattice(n, m).astype(float)
    E = np.swapaxes(pts[simp[:, 1:]] - pts[simp[:, :1]], 1, 2)
    det = np.linalg.det(E)
    # unimodular simplices with consistent signs
    np.testing.assert_allclose(np.abs(det), 1.0)
    np.testing.assert_array_equal(np.sign(det), signs)
    # centroids are interior and distinct
    cen = pts[simp].mean(axis=1)
    assert (cen > 0).all() and (cen.sum(axis=1) < m).all()
    assert len({tuple(np.round(c, 9)) for c in cen}) == len(cen)


def dirichlet(a):
    """Exact integral of s^a over the standard simplex."""
    return math.prod(math.factorial(x) for x in a) / math.factorial(sum(a) + len(a))


@pytest.mark.parametrize("n, q", [(1, 4), (2, 3), (3, 3), (4, 2)])
def test_simplex_rule_exactness(n, q):
    U, W = simplex_rule(n, q)
    assert W.sum() == pytest.approx(simplex_volume(n))
    for a in itertools.product(range(2 * q), repeat=n):
        if sum(a) <= 2 * q - 1:
            got = float(np.sum(W * np.prod(U ** np.array(a), axis=1)))
            assert got == pytest.approx(dirichlet(a), rel=1e-12)


@pytest.mark.parametrize("n, m, p", [(1, 8, 2.0), (2, 8, 3.0), (3, 4, 2.0)])
def test_graded_points_keep_triangulation(n, m, p):
    s = graded_points(n, m, p)
    k = lattice(n, m)
    assert (s[k == 0] == 0).all()
    np.testing.assert_allclose(s[k.sum(axis=1) == m].sum(axis=1), 1.0)
    simp, signs = kuhn_simplices(n, m)
    E = np.swapaxes(s[simp[:, 1:]] - s[simp[:, :1]], 1, 2)
    det = np.linalg.det(E)
    np.testing.assert_array_equal(np.sign(det), signs)
    assert np.sum(np.abs(det)) / math.factorial(n) == pytest.approx(simplex_volume(n))
    # even sub-lattice of level m is the graded level m/2
    even = (k % 2 == 0).all(axis=1)
    half = graded_points(n, m // 2, p)
    lookup = {tuple(r): i for i, r in enumerate(lattice(n, m // 2))}
    for row, pt in zip(k[even] // 2, s[even]):
        np.testing.assert_allclose(pt, half[lookup[tuple(row)]], atol=1e-15)


def test_grade_one_is_uniform():
    np.testing.assert_allclose(graded_points(2, 6, 1.0), lattice(2, 6) / 6, atol=1e-15)
