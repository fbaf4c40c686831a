"""Dense symmetric linear algebra used throughout the package.

All routines operate on numpy arrays.  Where it is cheap to do so they
also accept stacks of matrices with shape ``(..., n, n)``, which keeps
Monte Carlo loops vectorized.

Half-vectorization uses column-major order of the strict lower triangle:
``(1,0), (2,0), ..., (n-1,0), (2,1), ..., (n-1,n-2)`` (0-based).  Every
module and every file format shares this ordering.
"""
from __future__ import annotations

import math
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .errors import DimensionError, NotPositiveDefinite, NumericalFailure

EIG_FLOOR = 1e-12


class EigenPair(NamedTuple):
    """Eigendecomposition ``M = Q diag(values) Q'`` with values descending."""

    values: np.ndarray
    vectors: np.ndarray


def sym_matrix(M) -> np.ndarray:
    """Validate a square finite array and return its exact symmetrization."""
    M = np.asarray(M, dtype=float)
    if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
        raise DimensionError(f"expected square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def sym_eig(M) -> EigenPair:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Backed by LAPACK ``syevd`` through :func:`numpy.linalg.eigh`.  Equal
    eigenvalues keep the order in which the solver returned them.
    """
    M = sym_matrix(M)
    try:
        lam, Q = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigendecomposition did not converge: {exc}") from exc
    order = np.argsort(-lam, axis=-1, kind="stable")
    lam = np.take_along_axis(lam, order, axis=-1)
    Q = np.take_along_axis(Q, order[..., None, :], axis=-1)
    return EigenPair(lam, Q)


def _eigh(M):
    try:
        return np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigendecomposition did not converge: {exc}") from exc


def spectral_apply(Q, values) -> np.ndarray:
    """Return ``Q diag(values) Q'`` for (stacks of) eigenvectors and values."""
    M = (Q * values[..., None, :]) @ np.swapaxes(Q, -1, -2)
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def mat_exp_sym(G) -> np.ndarray:
    """Matrix exponential of a symmetric matrix via its eigendecomposition."""
    lam, Q = _eigh(sym_matrix(G))
    return spectral_apply(Q, np.exp(lam))


def mat_log_spd(C, floor: float = EIG_FLOOR) -> np.ndarray:
    """Matrix logarithm of a symmetric positive definite matrix.

    Eigenvalues at or below ``floor`` are rejected, never clamped.
    """
    lam, Q = _eigh(sym_matrix(C))
    lam_min = float(lam[..., 0].min())
    if lam_min <= floor:
        raise NotPositiveDefinite(
            f"matrix is not positive definite (lambda_min={lam_min:.3e})", lambda_min=lam_min
        )
    return spectral_apply(Q, np.log(lam))


def dim_from_len(d: int) -> int:
    """Matrix dimension n with n(n-1)/2 == d."""
    n = (1 + math.isqrt(1 + 8 * d)) // 2
    if n * (n - 1) // 2 != d:
        raise DimensionError(f"length {d} is not n(n-1)/2 for any integer n")
    return n


@lru_cache(maxsize=None)
def _vecl_index(n: int):
    rows, cols = np.tril_indices(n, -1)
    # tril_indices is row-major; re-sort to column-major
    order = np.lexsort((rows, cols))
    rows, cols = rows[order], cols[order]
    rows.flags.writeable = False
    cols.flags.writeable = False
    return rows, cols


def vecl_indices(n: int):
    """Row and column indices of the strict lower triangle, column-major."""
    return _vecl_index(int(n))


def vecl(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
        raise DimensionError(f"expected square matrix, got shape {M.shape}")
    rows, cols = vecl_indices(M.shape[-1])
    return M[..., rows, cols]


def unvecl(v, diag=0.0) -> np.ndarray:
    """Symmetric matrix with strict lower triangle ``v`` and diagonal ``diag``.

    ``diag`` may be a scalar or an array of length n (broadcast over stacks).
    """
    v = np.asarray(v, dtype=float)
    n = dim_from_len(v.shape[-1])
    diag = np.asarray(diag, dtype=float)
    if diag.ndim == 0:
        diag = np.full(n, float(diag))
    elif diag.shape[-1] != n:
        raise DimensionError(f"diag length {diag.shape[-1]} does not match n={n}")
    batch = np.broadcast_shapes(v.shape[:-1], diag.shape[:-1])
    M = np.zeros(batch + (n, n))
    rows, cols = vecl_indices(n)
    M[..., rows, cols] = v
    M[..., cols, rows] = v
    idx = np.arange(n)
    M[..., idx, idx] = diag
    return M


def cholesky(M) -> np.ndarray:
    """Lower-triangular L with L L' = M."""
    M = sym_matrix(M)
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        lam_min = float(np.linalg.eigvalsh(M).min())
        raise NotPositiveDefinite(
            f"Cholesky failed (lambda_min={lam_min:.3e})", lambda_min=lam_min
        ) from exc


def apply_permutation(M, perm) -> np.ndarray:
    """Return P M P' where ``result[i, j] == M[perm[i], perm[j]]``."""
    M = np.asarray(M, dtype=float)
    perm = np.asarray(perm)
    n = M.shape[-1]
    if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
        raise DimensionError(f"not a permutation of 0..{n - 1}: {perm!r}")
    return M[..., perm[:, None], perm[None, :]]
