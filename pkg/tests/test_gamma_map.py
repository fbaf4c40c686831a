import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from corrgen import baselines
from corrgen.errors import BoundExceeded, IterationLimit, NotPositiveDefinite
from corrgen.gamma_map import (
    JACOBIAN_MAX_DIM,
    corr_to_gamma,
    density_corr,
    gamma_to_corr,
    gaussian_density,
    is_irreducible,
    jacobian,
    logistic_density,
    min_eig_bounds,
    psi,
    validate_corr,
)
from corrgen.linalg import mat_log_spd, unvecl, vecl
from corrgen.verify import finite_difference_jacobian

LOG4_3 = math.log(4.0) / 3.0


def gamma_vectors(lo=-2.0, hi=2.0, dims=(2, 3, 4, 5)):
    return st.sampled_from(dims).flatmap(
        lambda n: hnp.arrays(np.float64, n * (n - 1) // 2, elements=st.floats(lo, hi))
    )


class TestValidate:
    def test_accepts_identity(self):
        validate_corr(np.eye(4))

    @pytest.mark.parametrize(
        "M",
        [
            np.array([[1.0, 0.2], [0.3, 1.0]]),
            np.array([[1.0, 0.2], [0.2, 0.9]]),
            np.array([[1.0, 1.0], [1.0, 1.0]]),
        ],
    )
    def test_rejects(self, M):
        with pytest.raises(ValueError):
            validate_corr(M)

    def test_rejects_indefinite(self):
        M = np.array([[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]])
        with pytest.raises(NotPositiveDefinite):
            validate_corr(M)


class TestForwardInverse:
    def test_identity(self):
        np.testing.assert_array_equal(corr_to_gamma(np.eye(3)), np.zeros(3))
        np.testing.assert_allclose(gamma_to_corr(np.zeros(6)), np.eye(4), atol=1e-15)

    def test_equicorrelation_half(self):
        C = gamma_to_corr(np.full(3, LOG4_3))
        np.testing.assert_allclose(vecl(C), 0.5, atol=1e-9)
        np.testing.assert_allclose(corr_to_gamma(baselines.equicorrelation(3, 0.5)), LOG4_3, atol=1e-12)

    @pytest.mark.parametrize(
        "gamma,expected",
        [
            ((0.60, 1.50, 0.05), [[1, 0.507, 0.897], [0.507, 1, 0.325], [0.897, 0.325, 1]]),
            ((0.59, 0.50, 0.04), [[1, 0.528, 0.460], [0.528, 1, 0.166], [0.460, 0.166, 1]]),
        ],
    )
    def test_displayed_matrices(self, gamma, expected):
        np.testing.assert_allclose(gamma_to_corr(gamma), expected, atol=5e-4)

    def test_not_monotone_in_gamma(self):
        # larger gamma everywhere, yet a smaller correlation
        hi = gamma_to_corr((0.60, 1.50, 0.05))
        lo = gamma_to_corr((0.59, 0.50, 0.04))
        assert hi[1, 0] < lo[1, 0]

    def test_displayed_matrix_inverts(self):
        C = np.array([[1, 0.507, 0.897], [0.507, 1, 0.325], [0.897, 0.325, 1]])
        np.testing.assert_allclose(corr_to_gamma(C), (0.60, 1.50, 0.05), atol=0.01)

    @given(st.floats(-15, 15))
    def test_n2_is_tanh(self, z):
        assert abs(gamma_to_corr([z])[1, 0] - math.tanh(z)) < 1e-10

    @given(gamma_vectors())
    @settings(max_examples=150, deadline=None)
    def test_roundtrip_property(self, g):
        C = gamma_to_corr(g)
        np.testing.assert_array_equal(C, C.T)
        np.testing.assert_array_equal(np.diag(C), 1.0)
        np.testing.assert_allclose(corr_to_gamma(C), g, atol=1e-8)

    @pytest.mark.parametrize("n", [2, 3, 5, 10])
    def test_roundtrip_wide_range(self, n, rng):
        g = rng.uniform(-2, 2, (300, n * (n - 1) // 2))
        assert np.abs(corr_to_gamma(gamma_to_corr(g)) - g).max() <= 1e-8

    def test_roundtrip_n25_conditioning(self, rng):
        # storing C in binary64 perturbs log C by up to ~eps/lambda_min, which
        # exceeds 1e-8 once lambda_min drops near 1e-9; bound the error by that floor
        n = 25
        g = rng.uniform(-2, 2, (100, n * (n - 1) // 2))
        C = gamma_to_corr(g)
        err = np.abs(corr_to_gamma(C) - g).max(axis=1)
        lam_min = np.linalg.eigvalsh(C)[:, 0]
        floor = 1e-8 + 100 * np.finfo(float).eps / lam_min
        assert np.all(err <= floor)

    def test_stack_matches_single(self, rng):
        g = rng.normal(size=(4, 6))
        stacked = gamma_to_corr(g)
        for k in range(4):
            np.testing.assert_allclose(stacked[k], gamma_to_corr(g[k]), atol=1e-14)

    def test_full_output(self):
        C, info = gamma_to_corr(np.full(3, 0.3), full_output=True)
        assert info.converged and info.iterations > 0
        assert info.residual < 1e-12

    def test_iteration_limit(self):
        with pytest.raises(IterationLimit) as exc:
            gamma_to_corr(np.linspace(-1.5, 1.5, 10), max_iter=2)
        assert exc.value.residual is not None

    @pytest.mark.parametrize("method", ["gram", "pac", "sap", "eigen"])
    def test_baseline_matrices_roundtrip(self, method, rng):
        n = 5
        for _ in range(20):
            if method == "gram":
                C = baselines.gram_sample(n, rng)
            elif method == "pac":
                C = baselines.pac_sample(n, 2.5, rng)
            elif method == "sap":
                C = baselines.sap_sample(n, rng)
            else:
                C = baselines.eigen_sample(n, rng)
            if np.linalg.eigvalsh(C)[0] < 1e-6:
                continue
            np.testing.assert_allclose(gamma_to_corr(corr_to_gamma(C)), C, atol=1e-8)


class TestPositivity:
    @given(hnp.arrays(np.float64, 6, elements=st.floats(0, 2)))
    @settings(max_examples=100, deadline=None)
    def test_nonnegative_gamma_nonnegative_corr(self, g):
        assert gamma_to_corr(g).min() >= -1e-12

    @given(hnp.arrays(np.float64, 6, elements=st.floats(1e-3, 2)))
    @settings(max_examples=100, deadline=None)
    def test_positive_gamma_positive_corr(self, g):
        assert gamma_to_corr(g).min() > 0


class TestJacobian:
    def test_identity(self):
        jb = jacobian(np.eye(3))
        np.testing.assert_allclose(jb.J, np.eye(3), atol=1e-12)
        assert abs(jb.psi - 1.0) < 1e-12

    def test_identity_nearly_diagonal(self):
        J = jacobian(np.eye(5)).J
        assert np.abs(J - np.diag(np.diag(J))).max() < 1e-8

    def test_displayed_values(self):
        jb = jacobian(gamma_to_corr(np.full(3, 0.25)))
        off = ~np.eye(3, dtype=bool)
        np.testing.assert_allclose(np.diag(jb.J), 0.920, atol=1e-3)
        np.testing.assert_allclose(jb.J[off], 0.102, atol=1e-3)
        Jinv = np.linalg.inv(jb.J)
        np.testing.assert_allclose(np.diag(Jinv), 1.111, atol=1e-3)
        np.testing.assert_allclose(Jinv[off], -0.111, atol=1e-3)

    @pytest.mark.parametrize("n", [2, 3, 4, 6])
    def test_finite_difference(self, n, rng):
        g = rng.uniform(-0.8, 0.8, n * (n - 1) // 2)
        J = jacobian(gamma_to_corr(g)).J
        np.testing.assert_allclose(J, finite_difference_jacobian(g), atol=1e-4)

    @given(gamma_vectors(-1.5, 1.5, dims=(3, 4)))
    @settings(max_examples=40, deadline=None)
    def test_bundle_invariants(self, g):
        jb = jacobian(gamma_to_corr(g))
        assert np.all(jb.Xi > 0)
        assert abs(jb.det_J * jb.psi - 1.0) < 1e-6
        A = jb.A_C
        np.testing.assert_allclose(A, A.T, atol=1e-12)
        assert np.linalg.eigvalsh(A)[0] > 0

    def test_repeated_eigenvalues(self):
        # equicorrelation has a multiplicity n-1 eigenvalue; xi must use the limit branch
        jb = jacobian(baselines.equicorrelation(4, 0.3))
        assert np.all(np.isfinite(jb.J))
        np.testing.assert_allclose(jb.J, finite_difference_jacobian(corr_to_gamma(baselines.equicorrelation(4, 0.3))),
                                   atol=1e-4)

    def test_too_large(self):
        with pytest.raises(BoundExceeded):
            jacobian(np.eye(JACOBIAN_MAX_DIM + 1))

    def test_psi_batched(self, rng):
        C = gamma_to_corr(rng.normal(size=(5, 3)))
        p = psi(C)
        assert p.shape == (5,)
        for k in range(5):
            assert abs(p[k] - jacobian(C[k]).psi) < 1e-10 * abs(p[k])


class TestDensity:
    def test_identity_gaussian(self):
        f = gaussian_density(np.zeros(3), np.eye(3))
        assert abs(density_corr(np.eye(3), f) - (2 * math.pi) ** -1.5) < 1e-14

    @pytest.mark.parametrize("r", [-0.9, -0.3, 0.0, 0.4, 0.95])
    def test_n2_logistic_is_uniform(self, r):
        C = np.array([[1.0, r], [r, 1.0]])
        assert abs(density_corr(C, logistic_density(0.0, 0.5)) - 0.5) < 1e-10

    def test_n3_normalization(self):
        # uniform proposal on the cube, keep points in the elliptope
        rng = np.random.default_rng(11)
        N = 400_000
        v = rng.uniform(-1, 1, (N, 3))
        M = unvecl(v, 1.0)
        ok = np.linalg.eigvalsh(M)[:, 0] > 1e-9
        C = M[ok]
        g = vecl(mat_log_spd(C))
        f = gaussian_density(np.zeros(3), np.eye(3))
        h = np.zeros(N)
        h[ok] = 8.0 * f(g) * np.abs(psi(C))
        est, se = h.mean(), h.std() / math.sqrt(N)
        assert abs(est - 1.0) < max(0.02, 4 * se)

    def test_rejects_bad_density(self):
        with pytest.raises(ValueError):
            density_corr(np.eye(2), lambda g: -1.0)


class TestBounds:
    def test_zero(self):
        rep = min_eig_bounds(np.zeros(3))
        assert abs(rep.lambda_min - 1.0) < 1e-12 and rep.upper == 1.0
        assert not rep.upper_violated

    def test_equicorrelation(self):
        rep = min_eig_bounds(np.full(3, LOG4_3))
        assert abs(rep.lambda_min - 0.5) < 1e-10
        assert abs(rep.upper - math.exp(-LOG4_3)) < 1e-15
        assert rep.lambda_min <= rep.upper

    def test_audit(self, rng):
        g = rng.normal(size=(20000, 10))
        C = gamma_to_corr(g)
        lam = np.linalg.eigvalsh(C)[:, 0]
        gmax = np.abs(g).max(axis=1)
        assert np.all(lam <= np.exp(-gmax) + 1e-10)
        assert np.all(lam >= np.exp(-5 * gmax))


def _irreducible_bruteforce(G):
    """Reducible iff some permutation makes P G P' block diagonal with a proper split."""
    n = G.shape[0]
    nz = (G != 0) & ~np.eye(n, dtype=bool)
    for perm in itertools.permutations(range(n)):
        P = nz[np.ix_(perm, perm)]
        for k in range(1, n):
            if not P[k:, :k].any():
                return False
    return True


class TestIrreducible:
    def test_complete(self):
        assert is_irreducible(np.ones((4, 4)))

    def test_two_blocks(self):
        G = np.zeros((4, 4))
        G[:2, :2] = G[2:, 2:] = 0.3
        assert not is_irreducible(G)

    def test_single(self):
        assert is_irreducible(np.zeros((1, 1)))

    @given(st.integers(2, 6).flatmap(lambda n: hnp.arrays(bool, (n, n))))
    @settings(max_examples=120, deadline=None)
    def test_against_permutation_search(self, mask):
        G = (mask | mask.T).astype(float)
        assert is_irreducible(G) == _irreducible_bruteforce(G)
