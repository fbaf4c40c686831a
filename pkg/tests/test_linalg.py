import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from corrgen.errors import DimensionError, NotPositiveDefinite
from corrgen.linalg import (
    apply_permutation,
    cholesky,
    dim_from_len,
    mat_exp_sym,
    mat_log_spd,
    spectral_apply,
    sym_eig,
    sym_matrix,
    unvecl,
    vecl,
    vecl_indices,
)


def _sym(draw_matrix):
    return 0.5 * (draw_matrix + draw_matrix.T)


sym_matrices = st.integers(1, 7).flatmap(
    lambda n: hnp.arrays(np.float64, (n, n), elements=st.floats(-3, 3, allow_nan=False))
).map(_sym)


class TestVecl:
    def test_column_major_order(self):
        M = np.arange(16.0).reshape(4, 4)
        # (1,0) (2,0) (3,0) (2,1) (3,1) (3,2)
        np.testing.assert_array_equal(vecl(M), [4, 8, 12, 9, 13, 14])

    def test_indices_cover_strict_lower(self):
        r, c = vecl_indices(6)
        assert len(r) == 15
        assert np.all(r > c)
        assert len(set(zip(r, c))) == 15

    def test_unvecl_symmetric_with_diag(self):
        v = np.array([0.1, 0.2, 0.3])
        M = unvecl(v, diag=1.0)
        np.testing.assert_array_equal(M, M.T)
        np.testing.assert_array_equal(np.diag(M), 1.0)
        np.testing.assert_array_equal(vecl(M), v)

    def test_stacked(self):
        V = np.random.default_rng(0).normal(size=(5, 10))
        np.testing.assert_array_equal(vecl(unvecl(V)), V)

    @pytest.mark.parametrize("d,n", [(0, 1), (1, 2), (3, 3), (6, 4), (300, 25)])
    def test_dim_from_len(self, d, n):
        assert dim_from_len(d) == n

    def test_dim_from_bad_len(self):
        with pytest.raises(DimensionError):
            dim_from_len(4)


class TestSpectral:
    def test_sym_eig_descending(self):
        M = np.diag([1.0, 3.0, 2.0])
        pair = sym_eig(M)
        np.testing.assert_array_equal(pair.values, [3.0, 2.0, 1.0])
        np.testing.assert_allclose(pair.vectors @ np.diag(pair.values) @ pair.vectors.T, M, atol=1e-14)

    def test_sym_matrix_rejects(self):
        with pytest.raises(DimensionError):
            sym_matrix(np.ones((2, 3)))
        with pytest.raises(ValueError):
            sym_matrix(np.array([[np.nan, 0], [0, 1]]))

    def test_exp_of_diagonal(self):
        np.testing.assert_allclose(mat_exp_sym(np.diag([0.0, 1.0])), np.diag([1.0, np.e]), atol=1e-15)

    def test_exp_against_taylor(self):
        # independent oracle: truncated power series
        G = np.array([[0.1, 0.3, -0.2], [0.3, -0.4, 0.5], [-0.2, 0.5, 0.2]])
        term, series = np.eye(3), np.eye(3)
        for k in range(1, 40):
            term = term @ G / k
            series = series + term
        np.testing.assert_allclose(mat_exp_sym(G), series, atol=1e-14)

    def test_log_rejects_singular(self):
        with pytest.raises(NotPositiveDefinite) as exc:
            mat_log_spd(np.ones((3, 3)))
        assert exc.value.lambda_min < 1e-12

    @given(sym_matrices)
    @settings(max_examples=60, deadline=None)
    def test_log_exp_inverse(self, G):
        np.testing.assert_allclose(mat_log_spd(mat_exp_sym(G)), G, atol=1e-9)

    @given(sym_matrices)
    @settings(max_examples=60, deadline=None)
    def test_exp_symmetric_positive(self, G):
        E = mat_exp_sym(G)
        np.testing.assert_array_equal(E, E.T)
        assert np.linalg.eigvalsh(E)[0] > 0

    def test_spectral_apply_symmetrized(self):
        Q, _ = np.linalg.qr(np.random.default_rng(1).normal(size=(4, 4)))
        A = spectral_apply(Q, np.array([1.0, 2.0, 3.0, 4.0]))
        np.testing.assert_array_equal(A, A.T)


class TestCholeskyPermutation:
    def test_cholesky_factor(self):
        C = np.array([[1.0, 0.5], [0.5, 1.0]])
        L = cholesky(C)
        np.testing.assert_allclose(L @ L.T, C, atol=1e-15)

    def test_cholesky_not_pd(self):
        with pytest.raises(NotPositiveDefinite):
            cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_permutation(self):
        M = np.arange(9.0).reshape(3, 3)
        P = apply_permutation(M, [2, 0, 1])
        Pm = np.eye(3)[[2, 0, 1]]
        np.testing.assert_array_equal(P, Pm @ M @ Pm.T)

    def test_bad_permutation(self):
        with pytest.raises(DimensionError):
            apply_permutation(np.eye(3), [0, 0, 1])
