import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from corrgen import block as B
from corrgen.errors import DimensionError, DomainError, InvalidState
from corrgen.gamma_map import corr_to_gamma, validate_corr
from corrgen.linalg import mat_exp_sym, mat_log_spd, vecl

LOG4_3 = math.log(4.0) / 3.0


def random_spec(rng, K_max=6, n_max=60, scale=0.5):
    K = int(rng.integers(1, K_max + 1))
    sizes = rng.integers(1, n_max // K + 1, K)
    Z = rng.uniform(-scale, scale, (K, K))
    return B.BlockSpec(tuple(sizes), np.triu(Z) + np.triu(Z, 1).T)


specs = st.integers(0, 2**32 - 1).map(lambda s: random_spec(np.random.default_rng(s), K_max=5, n_max=20))


class TestSpec:
    def test_singleton_diagonal_zeroed(self):
        spec = B.BlockSpec((1, 3), [[0.7, 0.1], [0.1, 0.2]])
        assert spec.gammas[0, 0] == 0.0 and spec.gammas[1, 1] == 0.2
        assert spec.n == 4 and spec.K == 2
        np.testing.assert_array_equal(spec.labels, [0, 1, 1, 1])

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            B.BlockSpec((2, 2), [[0.0, 0.1], [0.2, 0.0]])

    def test_rejects_bad_sizes(self):
        with pytest.raises(DimensionError):
            B.BlockSpec((0, 2), np.zeros((2, 2)))

    def test_dict_roundtrip(self):
        spec = B.BlockSpec((2, 3), [[0.1, -0.2], [-0.2, 0.3]])
        again = B.BlockSpec.from_dict(spec.to_dict())
        assert again.sizes == spec.sizes
        np.testing.assert_array_equal(again.gammas, spec.gammas)


class TestBasis:
    def test_two_point(self):
        Q = B.canonical_basis(B.BlockSpec((2,), [[0.3]]))
        s = 1 / math.sqrt(2)
        np.testing.assert_allclose(Q, [[s, s], [s, -s]], atol=1e-15)

    def test_singletons_are_identity(self):
        np.testing.assert_array_equal(B.canonical_basis(B.BlockSpec((1, 1, 1), np.zeros((3, 3)))), np.eye(3))

    @given(specs)
    @settings(max_examples=40, deadline=None)
    def test_orthonormal_and_reduces(self, spec):
        Q = B.canonical_basis(spec)
        np.testing.assert_allclose(Q.T @ Q, np.eye(spec.n), atol=1e-12)
        y = np.linspace(-0.5, 0.2, spec.K)
        D = Q.T @ B.dense_log_matrix(spec, y) @ Q
        np.testing.assert_allclose(D, B.build_D(spec, y), atol=1e-10)


class TestBuildD:
    def test_single_block(self):
        z, y = 0.3, -0.1
        D = B.build_D(B.BlockSpec((3,), [[z]]), [y])
        np.testing.assert_allclose(D, np.diag([2 * z + y, y - z, y - z]), atol=1e-15)

    def test_singletons(self):
        spec = B.BlockSpec((1, 1), [[0.0, 0.4], [0.4, 0.0]])
        np.testing.assert_allclose(B.build_D(spec, [0.1, 0.2]), [[0.1, 0.4], [0.4, 0.2]])

    def test_exp_matches_dense(self, rng):
        spec = random_spec(rng, n_max=30)
        y = rng.normal(size=spec.K) * 0.3
        Q = B.canonical_basis(spec)
        np.testing.assert_allclose(Q @ mat_exp_sym(B.build_D(spec, y)) @ Q.T,
                                   mat_exp_sym(B.dense_log_matrix(spec, y)), atol=1e-9)

    def test_wrong_length(self):
        with pytest.raises(DimensionError):
            B.build_D(B.BlockSpec((2, 2), np.zeros((2, 2))), [0.0])


class TestSolver:
    def test_zero(self):
        spec = B.BlockSpec((2, 3), np.zeros((2, 2)))
        sol = B.solve_block_diagonal(spec)
        np.testing.assert_allclose(sol.y, 0.0, atol=1e-15)
        np.testing.assert_allclose(B.block_corr(spec, sol), np.eye(5), atol=1e-15)

    def test_single_block_closed_form(self):
        n, z = 3, LOG4_3
        spec = B.BlockSpec((n,), [[z]])
        sol = B.solve_block_diagonal(spec)
        # e^y = n / (e^{(n-1)z} + (n-1) e^{-z})
        y_star = math.log(n / (math.exp((n - 1) * z) + (n - 1) * math.exp(-z)))
        assert abs(sol.y[0] - y_star) < 1e-12
        assert abs(sol.y[0] + math.log(4) / 6) < 1e-12
        C = B.block_corr(spec, sol)
        np.testing.assert_allclose(vecl(C), 0.5, atol=1e-12)

    def test_two_blocks_dense_oracle(self, rng):
        Z = rng.uniform(-0.3, 0.5, (2, 2))
        spec = B.BlockSpec((3, 3), np.triu(Z) + np.triu(Z, 1).T)
        sol = B.solve_block_diagonal(spec)
        E = mat_exp_sym(B.dense_log_matrix(spec, sol.y))
        np.testing.assert_allclose(np.diag(E), 1.0, atol=1e-10)

    @given(specs)
    @settings(max_examples=60, deadline=None)
    def test_properties(self, spec):
        s0 = B.solve_block_diagonal(spec)
        s1 = B.solve_block_diagonal(spec, y0=-np.ones(spec.K))
        assert s0.residual <= 1e-10
        assert np.all(s0.y <= 1e-10)
        np.testing.assert_allclose(s0.y, s1.y, atol=1e-10)
        C = B.block_corr(spec, s0)
        validate_corr(C)
        np.testing.assert_allclose(C, mat_exp_sym(B.dense_log_matrix(spec, s0.y)), atol=1e-9)

    @given(specs)
    @settings(max_examples=30, deadline=None)
    def test_log_has_block_pattern(self, spec):
        C = B.block_corr(spec, B.solve_block_diagonal(spec))
        G = mat_log_spd(C)
        lab = spec.labels
        off = ~np.eye(spec.n, dtype=bool)
        for k in range(spec.K):
            for l in range(spec.K):
                mask = np.outer(lab == k, lab == l) & off
                if mask.any():
                    np.testing.assert_allclose(G[mask], spec.gammas[k, l], atol=1e-9)

    def test_unsolved_rejected(self):
        spec = B.BlockSpec((2,), [[0.1]])
        bad = B.BlockSolution(np.zeros(1), np.zeros((1, 1)), 0, 1.0, False)
        with pytest.raises(InvalidState):
            B.block_corr(spec, bad)


class TestSampling:
    def test_degenerate_law(self, rng):
        C = B.sample_block_corr(B.BlockLaw((2, 3), 0.0, 0.0), rng)
        np.testing.assert_allclose(C, np.eye(5), atol=1e-15)

    def test_fixed_spec_passthrough(self):
        spec = B.BlockSpec((2, 2), [[0.2, 0.1], [0.1, -0.3]])
        np.testing.assert_array_equal(B.sample_block_corr(spec), B.block_corr(spec, B.solve_block_diagonal(spec)))

    def test_invariant_sweep(self):
        rng = np.random.default_rng(3)
        law = B.BlockLaw((2, 3, 4, 1), 0.0, 4.0)
        for _ in range(10_000):
            C = B.sample_block_corr(law, rng)
            validate_corr(C)

    def test_law_validation(self):
        with pytest.raises(DomainError):
            B.BlockLaw((2,), 0.0, -1.0)


class TestMixture:
    def test_single_identity_permutation(self):
        spec = B.BlockSpec((2, 3), [[0.2, 0.1], [0.1, -0.3]])
        mix = B.MixtureSpec((1.0,), (spec,), permutations=(np.arange(5),))
        C, lam = B.sample_mixture(mix, np.random.default_rng(0))
        np.testing.assert_allclose(C, B.sample_block_corr(spec), atol=1e-15)
        assert lam > 0

    def test_two_permutations_unit_diagonal(self, rng):
        spec = B.BlockSpec((2, 3), [[0.4, 0.1], [0.1, -0.3]])
        P1, P2 = rng.permutation(5), rng.permutation(5)
        mix = B.MixtureSpec((0.5, 0.5), (spec, spec), permutations=(P1, P2))
        C, lam = B.sample_mixture(mix, rng)
        base = B.sample_block_corr(spec)
        np.testing.assert_allclose(C, 0.5 * (base[np.ix_(P1, P1)] + base[np.ix_(P2, P2)]), atol=1e-15)
        np.testing.assert_array_equal(np.diag(C), 1.0)
        validate_corr(C)

    def test_weights_validated(self):
        law = B.BlockLaw((2, 2))
        with pytest.raises(DomainError):
            B.MixtureSpec((0.3, 0.3), (law, law))
        with pytest.raises(DimensionError):
            B.MixtureSpec((0.5, 0.5), (law, B.BlockLaw((3, 2))))

    def test_distinct_values_grow(self, rng):
        counts = []
        for M in (1, 3):
            C, lam = B.sample_mixture(B.MixtureSpec.uniform((5, 5, 5), M), rng)
            assert lam > 0
            counts.append(len(np.unique(vecl(C))))
        assert counts[0] <= 6 < counts[1]


class TestBench:
    def test_report(self, rng):
        spec = B.BlockLaw((10,) * 4).draw_spec(rng)
        rep = B.bench_block_vs_dense(spec, repeats=1)
        assert rep["max_abs_diff"] < 1e-8
        assert rep["speedup"] > 0

    def test_dense_skipped_above_limit(self, rng):
        spec = B.BlockLaw((10,) * 4).draw_spec(rng)
        rep = B.bench_block_vs_dense(spec, repeats=1, dense_max_n=20)
        assert "dense_seconds" not in rep
