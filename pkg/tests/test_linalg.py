"""Matrix wrapper, spectral extremes, and the SPD solver."""

import numpy as np
import pytest
import scipy.sparse

from svradmm.linalg import (
    RealMatrix,
    SpectralConvergenceError,
    solve_spd,
    spectral_extremes,
    stack_rows,
)


class TestMatVec:
    def test_identity(self):
        m = RealMatrix.identity(3)
        v = np.array([1.0, 2.0, 3.0])
        np.testing.assert_array_equal(m.mat_vec(v), v)

    def test_zero_matrix(self):
        m = RealMatrix.dense(np.zeros((4, 3)))
        out = m.mat_vec(np.array([5.0, -1.0, 2.0]))
        np.testing.assert_array_equal(out, np.zeros(4))

    def test_sparse_matches_dense_mirror(self):
        """Same triplets, sparse vs dense construction, equal products."""
        rng = np.random.default_rng(7)
        rows = [0, 1, 2, 3, 4, 0, 2]
        cols = [0, 1, 2, 3, 0, 3, 1]
        vals = list(rng.standard_normal(7))
        sp = RealMatrix.from_triplets(rows, cols, vals, (5, 4))
        dn = np.zeros((5, 4))
        for r, c, v in zip(rows, cols, vals):
            dn[r, c] += v
        v = rng.standard_normal(4)
        np.testing.assert_allclose(sp.mat_vec(v), dn @ v, atol=1e-14)

    def test_dimension_mismatch_raises(self):
        m = RealMatrix.identity(3)
        with pytest.raises(ValueError):
            m.mat_vec(np.zeros(4))

    def test_adjoint_identity_random(self):
        """<Mu, v> == <u, M^T v> on random dense and sparse instances."""
        rng = np.random.default_rng(11)
        for k in range(100):
            r, c = int(rng.integers(1, 9)), int(rng.integers(1, 9))
            a = rng.standard_normal((r, c))
            m = RealMatrix.dense(a) if k % 2 else RealMatrix(csr=scipy.sparse.csr_matrix(a))
            u, v = rng.standard_normal(c), rng.standard_normal(r)
            lhs = float(m.mat_vec(u) @ v)
            rhs = float(u @ m.rmat_vec(v))
            assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


class TestStackRows:
    def test_shapes_and_blocks(self):
        top = RealMatrix.dense(np.arange(6.0).reshape(2, 3))
        bot = RealMatrix.identity(3)
        s = stack_rows(top, bot)
        assert s.shape == (5, 3)
        d = s.to_dense()
        np.testing.assert_array_equal(d[:2], top.to_dense())
        np.testing.assert_array_equal(d[2:], np.eye(3))

    def test_column_mismatch_raises(self):
        with pytest.raises(ValueError):
            stack_rows(RealMatrix.identity(2), RealMatrix.identity(3))


class TestSpectralExtremes:
    def test_identity(self):
        s = spectral_extremes(RealMatrix.identity(2))
        assert s.sigma_max == pytest.approx(1.0, abs=1e-8)
        assert s.sigma_min == pytest.approx(1.0, abs=1e-8)

    def test_diagonal(self):
        """A = diag(3, 1): eigenvalues of A A^T are 9 and 1."""
        s = spectral_extremes(RealMatrix.dense(np.diag([3.0, 1.0])))
        assert s.sigma_max == pytest.approx(9.0, abs=1e-8)
        assert s.sigma_min == pytest.approx(1.0, abs=1e-8)

    def test_random_dense_vs_eigensolver(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((8, 5))
        s = spectral_extremes(RealMatrix.dense(a))
        w = np.linalg.eigvalsh(a @ a.T)
        # the nonzero spectrum of AA^T; its smallest entry can be 0 for fat A
        assert s.sigma_max == pytest.approx(float(w.max()), abs=1e-6)
        assert s.op_norm_gram == pytest.approx(float(np.linalg.eigvalsh(a.T @ a).max()), abs=1e-6)

    def test_diagonal_entries_squared(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            d = rng.uniform(0.5, 4.0, size=5)
            s = spectral_extremes(RealMatrix.dense(np.diag(d)))
            assert s.sigma_max == pytest.approx(float((d ** 2).max()), rel=1e-6)
            assert s.sigma_min == pytest.approx(float((d ** 2).min()), rel=1e-6)

    def test_ordering_invariant(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            a = rng.standard_normal((6, 6))
            s = spectral_extremes(RealMatrix.dense(a))
            assert 0.0 <= s.sigma_min <= s.sigma_max
            assert s.op_norm_gram == pytest.approx(s.sigma_max, abs=1e-8 * max(1.0, s.sigma_max))

    def test_large_matrix_power_path(self):
        """Above the dense-eigensolve cutoff the iterative path still agrees."""
        rng = np.random.default_rng(4)
        a = rng.standard_normal((80, 70))
        s = spectral_extremes(RealMatrix.dense(a))
        w = np.linalg.eigvalsh(a @ a.T)
        assert s.sigma_max == pytest.approx(float(w.max()), rel=1e-5)

    def test_nonconvergence_error_carries_best(self):
        rng = np.random.default_rng(5)
        a = rng.standard_normal((80, 70))
        with pytest.raises(SpectralConvergenceError) as exc:
            spectral_extremes(RealMatrix.dense(a), tol=1e-14, max_iters=2)
        assert exc.value.best.sigma_max > 0


class TestSolveSpd:
    def test_identity(self):
        b = np.array([1.0, -2.0, 0.5])
        np.testing.assert_allclose(solve_spd(np.eye(3), b), b)

    def test_scaled_identity(self):
        x = solve_spd(2.0 * np.eye(2), np.array([4.0, 6.0]))
        np.testing.assert_allclose(x, [2.0, 3.0])

    def test_random_spd_residual(self):
        rng = np.random.default_rng(13)
        g = rng.standard_normal((6, 6))
        m = g @ g.T + np.eye(6)
        b = rng.standard_normal(6)
        x = solve_spd(m, b)
        assert np.linalg.norm(m @ x - b) <= 1e-10 * np.linalg.norm(b)

    def test_round_trip_identity_on_b(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            g = rng.standard_normal((5, 5))
            m = g @ g.T + 0.1 * np.eye(5)
            b = rng.standard_normal(5)
            back = m @ solve_spd(m, b)
            assert np.linalg.norm(back - b) <= 1e-9 * max(1.0, np.linalg.norm(b))

    def test_non_spd_rejected(self):
        with pytest.raises(Exception):
            solve_spd(np.array([[1.0, 0.0], [0.0, -1.0]]), np.ones(2))
