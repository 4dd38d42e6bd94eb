# tests/test_linalg.py

import math
import unittest

import numpy as np

from momentstab import linalg
from momentstab.common import DimensionError


def givens(n, p, q, theta):
    g = np.eye(n)
    c, s = math.cos(theta), math.sin(theta)
    g[p, p] = g[q, q] = c
    g[p, q] = s
    g[q, p] = -s
    return g


class KronTest(unittest.TestCase):

    def test_identity_factor_is_block_diagonal(self):
        b = np.array([[1.0, 2.0], [3.0, 4.0]])
        expected = np.zeros((4, 4))
        expected[:2, :2] = b
        expected[2:, 2:] = b
        np.testing.assert_array_equal(linalg.kron(np.eye(2), b), expected)

    def test_scalar(self):
        np.testing.assert_array_equal(linalg.kron([[2.0]], [[3.0]]), [[6.0]])

    def test_mixed_product(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            a, b, c, d = (rng.standard_normal((3, 3)) for _ in range(4))
            np.testing.assert_allclose(linalg.kron(a, b) @ linalg.kron(c, d),
                                       linalg.kron(a @ c, b @ d), atol=1e-11)

    def test_vec_identity(self):
        rng = np.random.default_rng(12)
        for _ in range(1000):
            n = int(rng.integers(1, 5))
            a = rng.standard_normal((n, n))
            x = rng.standard_normal((n, n))
            x = x + x.T
            np.testing.assert_allclose(linalg.vec(a @ x @ a.T),
                                       linalg.kron(a, a) @ linalg.vec(x), atol=1e-11)

    def test_unvec_inverts_vec(self):
        x = np.arange(9.0).reshape(3, 3)
        np.testing.assert_array_equal(linalg.unvec(linalg.vec(x), 3), x)
        self.assertEqual(linalg.vec(x)[1], 3.0)      # column stacking
        with self.assertRaises(DimensionError):
            linalg.unvec(np.zeros(5), 2)


class SpectralRadiusTest(unittest.TestCase):

    def test_zero_matrix(self):
        self.assertEqual(linalg.spectral_radius(np.zeros((3, 3))), 0.0)

    def test_triangular(self):
        self.assertAlmostEqual(linalg.spectral_radius([[0.5, 1.0], [0.0, 0.5]]), 0.5,
                               places=12)

    def test_complex_pair(self):
        rot = 0.5 * np.array([[0.0, -1.0], [1.0, 0.0]])
        self.assertAlmostEqual(linalg.spectral_radius(rot), 0.5, places=12)
        ev = sorted(linalg.eigenvalues(rot), key=lambda z: z.imag)
        self.assertAlmostEqual(ev[0], -0.5j, places=12)
        self.assertAlmostEqual(ev[1], 0.5j, places=12)

    def test_non_square(self):
        with self.assertRaises(DimensionError):
            linalg.spectral_radius(np.zeros((2, 3)))

    def test_against_lapack_and_polynomial_roots(self):
        rng = np.random.default_rng(13)
        for _ in range(200):
            a = rng.standard_normal((5, 5))
            rho = linalg.spectral_radius(a)
            self.assertAlmostEqual(rho, np.max(np.abs(np.linalg.eigvals(a))), delta=1e-10)
            roots = np.roots(np.poly(a))
            self.assertAlmostEqual(rho, np.max(np.abs(roots)), delta=1e-6)

    def test_all_eigenvalues(self):
        rng = np.random.default_rng(14)
        for _ in range(100):
            n = int(rng.integers(2, 9))
            a = rng.standard_normal((n, n))
            mine = np.sort_complex(linalg.eigenvalues(a))
            ref = np.sort_complex(np.linalg.eigvals(a))
            np.testing.assert_allclose(mine, ref, atol=1e-9)

    def test_kron_square(self):
        rng = np.random.default_rng(15)
        for _ in range(200):
            a = rng.standard_normal((3, 3))
            rho = linalg.spectral_radius(a)
            self.assertAlmostEqual(linalg.spectral_radius(linalg.kron(a, a)), rho * rho,
                                   delta=1e-8 * max(1.0, rho * rho))

    def test_nonnegative_fast_path(self):
        rng = np.random.default_rng(16)
        for _ in range(50):
            a = rng.random((6, 6))
            self.assertAlmostEqual(linalg.spectral_radius(a),
                                   np.max(np.abs(np.linalg.eigvals(a))), delta=1e-10)

    def test_hessenberg_is_similar(self):
        rng = np.random.default_rng(17)
        a = rng.standard_normal((6, 6))
        h = linalg.hessenberg(a)
        self.assertTrue(np.all(np.tril(h, -2) == 0.0))
        np.testing.assert_allclose(np.sort_complex(np.linalg.eigvals(h)),
                                   np.sort_complex(np.linalg.eigvals(a)), atol=1e-10)


class SymmetricTest(unittest.TestCase):

    def test_identity(self):
        self.assertEqual(linalg.sym_eig_extremes(np.eye(3)), (1.0, 1.0))

    def test_diagonal(self):
        self.assertEqual(linalg.sym_eig_extremes(np.diag([-2.0, 3.0])), (-2.0, 3.0))

    def test_trace_and_determinant(self):
        rng = np.random.default_rng(18)
        for _ in range(1000):
            s = rng.standard_normal((6, 6))
            s = s + s.T
            w, v = linalg.sym_eig(s)
            self.assertAlmostEqual(w.sum(), np.trace(s), delta=1e-9 * max(1.0, abs(np.trace(s))))
            det = np.linalg.det(s)
            scale = max(1.0, float(np.abs(w).max())) ** 6
            self.assertAlmostEqual(np.prod(w), det, delta=1e-10 * scale)
            np.testing.assert_allclose(v.T @ v, np.eye(6), atol=1e-12)
            self.assertTrue(np.all(np.diff(w) >= 0.0))

    def test_orthogonal_invariance(self):
        rng = np.random.default_rng(19)
        for _ in range(200):
            s = rng.standard_normal((5, 5))
            s = s + s.T
            q = np.eye(5)
            for _ in range(10):
                p, r = rng.choice(5, size=2, replace=False)
                q = q @ givens(5, p, r, rng.uniform(0.0, 2.0 * math.pi))
            lo, hi = linalg.sym_eig_extremes(s)
            lo2, hi2 = linalg.sym_eig_extremes(q.T @ s @ q)
            self.assertAlmostEqual(lo, lo2, delta=1e-9)
            self.assertAlmostEqual(hi, hi2, delta=1e-9)

    def test_converges_after_rotations_annihilate(self):
        rng = np.random.default_rng(21)
        for n, count in ((4, 300), (6, 300), (12, 100)):
            for _ in range(count):
                s = rng.uniform(0.1, 2.0) * rng.standard_normal((n, n))
                s = s + s.T
                w, v = linalg.sym_eig(s)
                scale = max(1.0, float(np.abs(w).max()))
                np.testing.assert_allclose(s @ v, v * w, atol=1e-11 * n * scale)
                np.testing.assert_allclose(np.sort(w), np.linalg.eigvalsh(s),
                                           atol=1e-11 * n * scale)

    def test_converged_input_returns_at_once(self):
        # off-diagonal entries far below sqrt(eps) relative to the diagonal
        s = np.diag([0.117, 0.5, 1.0, 1.7, 2.2, 2.64])
        s[0, 5] = s[5, 0] = 1e-120
        w, v = linalg.sym_eig(s, max_sweeps=1)
        np.testing.assert_allclose(w, np.diag(s))
        np.testing.assert_allclose(np.abs(v), np.eye(6), atol=1e-15)

    def test_matches_lapack(self):
        rng = np.random.default_rng(20)
        for _ in range(100):
            s = rng.standard_normal((8, 8))
            s = s + s.T
            ref = np.linalg.eigvalsh(s)
            lo, hi = linalg.sym_eig_extremes(s)
            scale = max(1.0, np.abs(ref).max())
            self.assertAlmostEqual(lo, ref[0], delta=1e-11 * scale)
            self.assertAlmostEqual(hi, ref[-1], delta=1e-11 * scale)


class HeTest(unittest.TestCase):

    def test_identity(self):
        np.testing.assert_array_equal(linalg.he(np.eye(3)), 2.0 * np.eye(3))

    def test_nilpotent(self):
        np.testing.assert_array_equal(linalg.he([[0.0, 1.0], [0.0, 0.0]]),
                                      [[0.0, 1.0], [1.0, 0.0]])

    def test_non_square(self):
        with self.assertRaises(DimensionError):
            linalg.he(np.zeros((2, 3)))

    def test_s_variable_expansion(self):
        rng = np.random.default_rng(21)
        n = 3
        a = rng.standard_normal((n, n))
        s1 = rng.standard_normal((n, n))
        s2 = rng.standard_normal((n, n))
        got = linalg.he(np.vstack([s1, s2]) @ np.hstack([a, np.eye(n)]))
        expected = np.block([[s1 @ a + a.T @ s1.T, s1 + a.T @ s2.T],
                             [s2 @ a + s1.T, s2 + s2.T]])
        np.testing.assert_allclose(got, expected, atol=1e-12)


if __name__ == '__main__':
    unittest.main()
