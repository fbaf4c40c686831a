"""Established generators used for comparison.

naive rejection, random Gram, standard angles (SAP), eigendecomposition
with Givens rotations, partial correlations (PAC, D-vine order) and
Wishart sample correlations.  Throughout, "Beta(a, b) on (-1, 1)" means
2B - 1 with B ~ Beta(a, b).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, NumericalFailure, ValidityStarvation
from .linalg import cholesky, sym_matrix, vecl_indices

METHODS = ("naive", "gram", "sap", "eigen", "pac", "wishart")


def _symmetric_from_upper(n, values):
    """(size, n, n) unit-diagonal symmetric matrices from vecl-ordered values."""
    rows, cols = vecl_indices(n)
    C = np.zeros(values.shape[:-1] + (n, n))
    C[..., rows, cols] = values
    C[..., cols, rows] = values
    idx = np.arange(n)
    C[..., idx, idx] = 1.0
    return C


# -- naive --------------------------------------------------------------------


def naive_proposals(n: int, rng: np.random.Generator, size: int) -> np.ndarray:
    d = n * (n - 1) // 2
    return _symmetric_from_upper(n, rng.uniform(-1.0, 1.0, (size, d)))


def naive_accept(n: int, trials: int, rng: np.random.Generator, chunk: int = 100_000) -> np.ndarray:
    """Run ``trials`` naive proposals and return the valid ones."""
    kept = []
    left = int(trials)
    while left > 0:
        m = min(chunk, left)
        C = naive_proposals(n, rng, m)
        kept.append(C[np.linalg.eigvalsh(C)[:, 0] > 0])
        left -= m
    return np.concatenate(kept) if kept else np.zeros((0, n, n))


def naive_sample(n: int, rng: np.random.Generator, max_tries: int = 10**6):
    """First valid proposal among iid uniform(-1, 1) entries; ``(C, attempts)``."""
    if n < 2:
        raise DomainError("n must be at least 2")
    attempts = 0
    batch = 1
    while attempts < max_tries:
        m = min(batch, max_tries - attempts)
        C = naive_proposals(n, rng, m)
        ok = np.flatnonzero(np.linalg.eigvalsh(C)[:, 0] > 0)
        if ok.size:
            return C[ok[0]], attempts + int(ok[0]) + 1
        attempts += m
        batch = min(batch * 2, 4096)
    raise ValidityStarvation(f"no valid matrix in {attempts} naive proposals", attempts=attempts)


# -- random Gram --------------------------------------------------------------


def sphere_columns(rng: np.random.Generator, n: int, size=None) -> np.ndarray:
    """n columns uniform on the unit sphere in R^n."""
    shape = (n, n) if size is None else (size, n, n)
    U = rng.standard_normal(shape)
    return U / np.linalg.norm(U, axis=-2, keepdims=True)


def gram_sample(n: int, rng: np.random.Generator, column_law=None, size=None, max_tries: int = 100):
    """C = U'U for unit-norm random columns.

    ``column_law(rng, n)`` must return an m x n array of unit columns; by
    default columns are uniform on the sphere.  Rank-deficient draws
    (lambda_min <= 1e-10) are redrawn.
    """
    law = column_law or (lambda r, k: sphere_columns(r, k))
    m = 1 if size is None else int(size)
    out = np.empty((m, n, n))
    for i in range(m):
        for _ in range(max_tries):
            U = np.asarray(law(rng, n), dtype=float)
            C = U.T @ U
            C = 0.5 * (C + C.T)
            np.fill_diagonal(C, 1.0)
            if np.linalg.eigvalsh(C)[0] > 1e-10:
                break
        else:
            raise NumericalFailure(f"Gram draw stayed rank deficient for {max_tries} tries")
        out[i] = C
    return out[0] if size is None else out


def gram_sample_sphere(n: int, rng: np.random.Generator, size: int) -> np.ndarray:
    """Vectorized :func:`gram_sample` for the default sphere law."""
    U = sphere_columns(rng, n, size)
    C = np.swapaxes(U, -1, -2) @ U
    C = 0.5 * (C + np.swapaxes(C, -1, -2))
    idx = np.arange(n)
    C[:, idx, idx] = 1.0
    bad = np.linalg.eigvalsh(C)[:, 0] <= 1e-10
    if bad.any():
        C[bad] = gram_sample(n, rng, size=int(bad.sum()))
    return C


# -- standard angles ----------------------------------------------------------


def angles_to_corr(theta) -> np.ndarray:
    """C = U'U with U the upper-triangular angle factor.

    ``theta[..., i, j]`` for i < j holds the angle in [0, pi); the rest of
    the array is ignored.  Column j of U is
    ``(cos t_0j, cos t_1j sin t_0j, ..., prod_i sin t_ij)``.
    """
    theta = np.asarray(theta, dtype=float)
    n = theta.shape[-1]
    c, s = np.cos(theta), np.sin(theta)
    U = np.zeros(theta.shape)
    U[..., 0, 0] = 1.0
    for j in range(1, n):
        run = np.ones(theta.shape[:-2])
        for i in range(j):
            U[..., i, j] = c[..., i, j] * run
            run = run * s[..., i, j]
        U[..., j, j] = run
    C = np.swapaxes(U, -1, -2) @ U
    C = 0.5 * (C + np.swapaxes(C, -1, -2))
    idx = np.arange(n)
    C[..., idx, idx] = 1.0
    return C


def sap_sample(n: int, rng: np.random.Generator, angle_law: str = "uniform", alpha: float | None = None, size=None):
    """Standard angles parameterization.

    ``angle_law="uniform"`` draws every angle uniform on [0, pi).
    ``angle_law="beta"`` draws angles in row i (1-based) with
    cos(theta) ~ Beta(alpha - (i-1)/2, same) on (-1, 1), which makes every
    correlation Beta(alpha, alpha) on (-1, 1); requires alpha >= n/2.
    """
    m = 1 if size is None else int(size)
    theta = np.zeros((m, n, n))
    rows, cols = np.triu_indices(n, 1)
    if angle_law == "uniform":
        theta[:, rows, cols] = rng.uniform(0.0, np.pi, (m, rows.size))
    elif angle_law == "beta":
        if alpha is None or alpha < n / 2:
            raise DomainError(f"SAP beta family requires alpha >= n/2 = {n / 2}")
        a = alpha - rows / 2.0  # 0-based row i -> alpha - i/2
        b = rng.beta(a, a, (m, rows.size))
        theta[:, rows, cols] = np.arccos(np.clip(2.0 * b - 1.0, -1.0, 1.0))
    else:
        raise ValueError("angle_law must be 'uniform' or 'beta'")
    C = angles_to_corr(theta)
    return C[0] if size is None else C


# -- eigendecomposition -------------------------------------------------------


def haar_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR of a Gaussian, R-diagonal sign fix)."""
    Z = rng.standard_normal((n, n))
    Q, R = np.linalg.qr(Z)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def exp_simplex_eigenvalues(rng: np.random.Generator, n: int) -> np.ndarray:
    y = rng.exponential(1.0, n)
    return n * y / y.sum()


SCHEDULES = ("ordered", "extremes")


def _next_pair(diag, tol, schedule):
    dev = diag - 1.0
    if schedule == "extremes":
        i, j = int(np.argmin(dev)), int(np.argmax(dev))
        return (i, j) if dev[j] > tol or -dev[i] > tol else None
    off = np.flatnonzero(np.abs(dev) > tol)
    if off.size == 0:
        return None
    i = int(off[0])
    partners = np.flatnonzero(dev[i + 1 :] * dev[i] < 0) + i + 1
    if partners.size:
        return i, int(partners[0])
    # only roundoff-sized deviations remain on the other side
    j = int(np.argmin(dev) if dev[i] > 0 else np.argmax(dev))
    return (i, j) if dev[i] * dev[j] < 0 else None


def givens_to_unit_diagonal(A, tol: float = 1e-12, schedule: str = "ordered", max_rotations: int | None = None):
    """Rotate a symmetric PSD matrix with trace n until its diagonal is all ones.

    Each plane rotation pairs an index i whose diagonal entry differs from 1
    with an index j on the other side of 1 and sets ``A[i, i]`` to exactly 1.

    schedule : {"ordered", "extremes"}
        ``"ordered"`` fixes indices in increasing order, taking the first
        later index on the opposite side of 1 as partner (Bendel-Mickey
        style; the resulting law is not exchangeable).  ``"extremes"``
        pairs the smallest and largest diagonal entries.
    """
    if schedule not in SCHEDULES:
        raise ValueError(f"schedule must be one of {SCHEDULES}")
    A = np.array(sym_matrix(A))
    n = A.shape[0]
    limit = max_rotations if max_rotations is not None else 4 * n
    rotations = 0
    while (pair := _next_pair(np.diag(A), tol, schedule)) is not None:
        if rotations == limit:
            raise NumericalFailure(f"Givens rotation schedule did not finish in {limit} rotations")
        rotations += 1
        i, j = pair
        aii, ajj, aij = A[i, i], A[j, j], A[i, j]
        # tan(theta) solves t^2 (ajj - 1) - 2 t aij + (aii - 1) = 0; the
        # discriminant is positive because (aii - 1)(ajj - 1) < 0
        disc = aij * aij - (aii - 1.0) * (ajj - 1.0)
        if not disc > 0:
            raise NumericalFailure("no rotation found to fix the diagonal")
        t = (aii - 1.0) / (aij + np.copysign(np.sqrt(disc), aij))
        cth = 1.0 / np.sqrt(1.0 + t * t)
        sth = t * cth
        R = np.eye(n)
        R[i, i] = cth
        R[j, j] = cth
        R[i, j] = sth
        R[j, i] = -sth
        # A <- R' A R leaves every index other than i, j on the diagonal unchanged
        A = R.T @ A @ R
        A = 0.5 * (A + A.T)
        A[i, i] = 1.0
    np.fill_diagonal(A, 1.0)
    return A


def eigen_sample(n: int, rng: np.random.Generator, eigenvalue_law=None, eigenvalues=None,
                 schedule: str = "ordered") -> np.ndarray:
    """Correlation matrix with a prescribed spectrum.

    Spectrum comes from ``eigenvalues`` if given, else ``eigenvalue_law(rng, n)``,
    else n times normalized iid Exp(1).  Must be non-negative and sum to n.
    ``schedule`` is passed to :func:`givens_to_unit_diagonal`.
    """
    if eigenvalues is None:
        eigenvalues = (eigenvalue_law or exp_simplex_eigenvalues)(rng, n)
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.shape != (n,) or np.any(lam < 0) or abs(lam.sum() - n) > 1e-9 * n:
        raise DomainError("eigenvalues must be non-negative and sum to n")
    Q0 = haar_orthogonal(n, rng)
    A = (Q0 * lam) @ Q0.T
    return givens_to_unit_diagonal(A, schedule=schedule)


# -- partial correlations -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class PartialCorrSet:
    """D-vine partial correlations; ``values[..., i, j]`` for i < j."""

    values: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.values, dtype=float)
        if P.ndim < 2 or P.shape[-1] != P.shape[-2]:
            raise DimensionError(f"partials must be stored in a square array, got shape {P.shape}")
        rows, cols = np.triu_indices(P.shape[-1], 1)
        if np.any(np.abs(P[..., rows, cols]) >= 1.0):
            raise DomainError("partial correlations must lie in (-1, 1)")
        object.__setattr__(self, "values", P)

    @property
    def n(self) -> int:
        return self.values.shape[-1]


def pac_alpha(alpha: float, i: int, j: int) -> float:
    """Beta shape for the partial correlation at lag j - i."""
    return alpha + (1 - (j - i)) / 2.0


def _conditional_terms(C, i, j):
    """d_ij, d_ii, d_jj from the block between indices i and j."""
    if j - i == 1:
        z = np.zeros(C.shape[:-2])
        return z, z, z
    I = np.arange(i + 1, j)
    S = C[..., I[:, None], I[None, :]]
    ci = C[..., i, I]
    cj = C[..., j, I]
    sol = np.linalg.solve(S, np.stack([ci, cj], axis=-1))
    d_ij = np.einsum("...k,...k->...", ci, sol[..., 1])
    d_ii = np.einsum("...k,...k->...", ci, sol[..., 0])
    d_jj = np.einsum("...k,...k->...", cj, sol[..., 1])
    return d_ij, d_ii, d_jj


def partials_to_corr(p) -> np.ndarray:
    """Rebuild C from D-vine partial correlations, in order of increasing lag."""
    P = p.values if isinstance(p, PartialCorrSet) else np.asarray(p, dtype=float)
    n = P.shape[-1]
    rows, cols = np.triu_indices(n, 1)
    vals = P[..., rows, cols]
    if np.any(np.abs(vals) >= 1.0):
        raise DomainError("partial correlations must lie in (-1, 1)")
    C = np.zeros(P.shape)
    idx = np.arange(n)
    C[..., idx, idx] = 1.0
    for lag in range(1, n):
        for i in range(n - lag):
            j = i + lag
            d_ij, d_ii, d_jj = _conditional_terms(C, i, j)
            c = d_ij + P[..., i, j] * np.sqrt((1.0 - d_ii) * (1.0 - d_jj))
            C[..., i, j] = c
            C[..., j, i] = c
    return C


def corr_to_partials(C) -> PartialCorrSet:
    C = np.asarray(C, dtype=float)
    n = C.shape[-1]
    P = np.zeros(C.shape)
    for lag in range(1, n):
        for i in range(n - lag):
            j = i + lag
            d_ij, d_ii, d_jj = _conditional_terms(C, i, j)
            P[..., i, j] = (C[..., i, j] - d_ij) / np.sqrt((1.0 - d_ii) * (1.0 - d_jj))
    return PartialCorrSet(P)


def pac_sample(n: int, alpha: float, rng: np.random.Generator, size=None) -> np.ndarray:
    """Partials Beta(alpha + (1 - lag)/2, same) on (-1, 1); marginals Beta(alpha, alpha)."""
    if not alpha > (n - 2) / 2:
        raise DomainError(f"PAC requires alpha > (n-2)/2 = {(n - 2) / 2}")
    m = 1 if size is None else int(size)
    rows, cols = np.triu_indices(n, 1)
    a = alpha + (1 - (cols - rows)) / 2.0
    P = np.zeros((m, n, n))
    b = rng.beta(a, a, (m, rows.size))
    # keep partials strictly inside (-1, 1)
    P[:, rows, cols] = np.clip(2.0 * b - 1.0, -1 + 1e-15, 1 - 1e-15)
    C = partials_to_corr(P)
    return C[0] if size is None else C


def partial_det(p) -> np.ndarray:
    """prod_{i<j} (1 - rho_ij^2), which equals det C."""
    P = p.values if isinstance(p, PartialCorrSet) else np.asarray(p, dtype=float)
    rows, cols = np.triu_indices(P.shape[-1], 1)
    return np.prod(1.0 - P[..., rows, cols] ** 2, axis=-1)


# -- Wishart ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WishartConfig:
    sigma: np.ndarray
    T: int

    def __post_init__(self):
        sigma = sym_matrix(self.sigma)
        if int(self.T) < sigma.shape[0]:
            raise DomainError("Wishart degrees of freedom T must be at least n")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "T", int(self.T))
        object.__setattr__(self, "_chol", cholesky(sigma))

    @property
    def n(self) -> int:
        return self.sigma.shape[0]


def wishart_corr_sample(cfg: WishartConfig, rng: np.random.Generator, size=None) -> np.ndarray:
    """Sample correlation D^-1 S D^-1 of S = sum_t X_t X_t', X_t ~ N(0, sigma)."""
    m = 1 if size is None else int(size)
    n = cfg.n
    out = np.empty((m, n, n))
    for k in range(m):
        for attempt in range(2):
            X = rng.standard_normal((cfg.T, n)) @ cfg._chol.T
            S = X.T @ X
            dinv = 1.0 / np.sqrt(np.diag(S))
            C = S * np.outer(dinv, dinv)
            C = 0.5 * (C + C.T)
            np.fill_diagonal(C, 1.0)
            if np.linalg.eigvalsh(C)[0] > 0:
                break
        else:
            raise NumericalFailure("Wishart draw singular twice")
        out[k] = C
    return out[0] if size is None else out


def equicorrelation(n: int, rho: float) -> np.ndarray:
    C = np.full((n, n), float(rho))
    np.fill_diagonal(C, 1.0)
    return C
