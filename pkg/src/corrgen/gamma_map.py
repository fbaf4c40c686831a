"""The bijection between correlation matrices and unconstrained vectors.

A nonsingular n x n correlation matrix C is identified with the vector
``gamma = vecl(log C)`` in R^d, d = n(n-1)/2.  Going from gamma back to C
means finding the unique diagonal x for which ``exp(G[x])`` has a unit
diagonal, where ``G[x]`` has off-diagonals gamma and diagonal x.  That
diagonal is the fixed point of ``x <- x - log diag(exp G[x])``.

This module also provides the Jacobian d vecl(C) / d gamma, the
change-of-variables factor psi(C) = 1 / det(J), density transport and
eigenvalue bound diagnostics.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import BoundExceeded, DimensionError, IterationLimit, NotPositiveDefinite, NumericalFailure
from .linalg import EIG_FLOOR, _eigh, dim_from_len, mat_log_spd, spectral_apply, sym_matrix, vecl, vecl_indices

JACOBIAN_MAX_DIM = 50
XI_GAP = 1e-10
# once converged, keep iterating until the update stalls at this floor
_POLISH_FLOOR = 16 * np.finfo(float).eps


@dataclass(frozen=True)
class FixedPointInfo:
    """Diagnostics from :func:`gamma_to_corr`.

    For stacked input the fields summarize the worst member of the stack.
    """

    converged: bool
    iterations: int
    update: float
    residual: float


def validate_corr(C, diag_tol: float = 1e-12, eig_floor: float = EIG_FLOOR) -> np.ndarray:
    """Check the correlation-matrix invariants and return C as a float array.

    Raises ``ValueError`` for a broken diagonal or out-of-range entries and
    :class:`NotPositiveDefinite` if the smallest eigenvalue is at or below
    ``eig_floor``.  Stacks of matrices are validated elementwise.
    """
    C = np.asarray(C, dtype=float)
    if C.ndim < 2 or C.shape[-1] != C.shape[-2]:
        raise DimensionError(f"expected square matrix, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise ValueError("correlation matrix has non-finite entries")
    if not np.array_equal(C, np.swapaxes(C, -1, -2)):
        raise ValueError("correlation matrix is not symmetric")
    n = C.shape[-1]
    diag = np.diagonal(C, axis1=-2, axis2=-1)
    if np.any(np.abs(diag - 1.0) > diag_tol):
        raise ValueError("correlation matrix diagonal is not 1")
    off = vecl(C)
    if np.any(np.abs(off) >= 1.0):
        raise ValueError("correlation entries must lie in (-1, 1)")
    if n > 1:
        lam_min = float(np.linalg.eigvalsh(C)[..., 0].min())
        if lam_min <= eig_floor:
            raise NotPositiveDefinite(
                f"correlation matrix is not positive definite (lambda_min={lam_min:.3e})",
                lambda_min=lam_min,
            )
    return C


def corr_to_gamma(C) -> np.ndarray:
    """gamma = vecl(log C)."""
    C = validate_corr(C)
    return vecl(mat_log_spd(C))


def gamma_to_corr(gamma, tol: float = 1e-12, max_iter: int = 1000, full_output: bool = False):
    """Correlation matrix C(gamma), the inverse of :func:`corr_to_gamma`.

    Parameters
    ----------
    gamma : array_like, shape (d,) or (N, d)
        Off-diagonal elements of log C in vecl order.
    tol : float
        Convergence is declared when the max-norm of the diagonal update
        drops below ``tol``.  Iteration then continues until the update
        stalls at the roundoff floor, which is what makes the round trip
        accurate for ill-conditioned matrices.
    max_iter : int
        Iteration cap.
    full_output : bool
        Also return a :class:`FixedPointInfo`.

    Returns
    -------
    C : ndarray, shape (n, n) or (N, n, n)
        Diagonal set exactly to one, exactly symmetric.
    """
    gamma = np.asarray(gamma, dtype=float)
    if gamma.ndim not in (1, 2):
        raise DimensionError(f"gamma must be 1-D or 2-D, got shape {gamma.shape}")
    if not np.all(np.isfinite(gamma)):
        raise ValueError("gamma has non-finite entries")
    single = gamma.ndim == 1
    g = np.atleast_2d(gamma)
    N, d = g.shape
    n = dim_from_len(d)
    rows, cols = vecl_indices(n)
    diag_idx = np.arange(n)

    G = np.zeros((N, n, n))
    G[:, rows, cols] = g
    G[:, cols, rows] = g
    x = np.zeros((N, n))
    last = np.full(N, np.inf)
    converged = np.zeros(N, dtype=bool)
    active = np.ones(N, dtype=bool)
    it = 0
    while it < max_iter and active.any():
        idx = np.flatnonzero(active)
        Ga = G[idx]
        Ga[:, diag_idx, diag_idx] = x[idx]
        lam, Q = _eigh(Ga)
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            dexp = np.einsum("nij,nj,nij->ni", Q, np.exp(lam), Q)
            upd = -np.log(dexp)
        x[idx] += upd
        u = np.abs(upd).max(axis=1)
        it += 1
        was = converged[idx]
        now = u < tol
        stalled = was & ((u >= last[idx]) | (u <= _POLISH_FLOOR))
        converged[idx] = was | now
        done = stalled | (now & (u <= _POLISH_FLOOR))
        active[idx[done]] = False
        last[idx] = u

    G[:, diag_idx, diag_idx] = x
    lam, Q = _eigh(G)
    with np.errstate(over="ignore", invalid="ignore"):
        C = spectral_apply(Q, np.exp(lam))
    residual = float(np.abs(np.diagonal(C, axis1=1, axis2=2) - 1.0).max()) if n else 0.0
    worst_update = float(np.max(last)) if N else 0.0
    if not converged.all():
        raise IterationLimit(
            f"gamma_to_corr did not converge in {max_iter} iterations "
            f"(last update {worst_update:.3e}, residual {residual:.3e})",
            residual=residual,
            iterations=it,
        )
    # rescale rather than overwrite the diagonal: log is far less sensitive to
    # a diagonal congruence than to a diagonal shift when lambda_min is small
    s = 1.0 / np.sqrt(np.diagonal(C, axis1=1, axis2=2))
    C = C * s[:, :, None] * s[:, None, :]
    C = 0.5 * (C + np.swapaxes(C, 1, 2))
    C[:, diag_idx, diag_idx] = 1.0
    if single:
        C = C[0]
    if full_output:
        return C, FixedPointInfo(True, it, worst_update, residual)
    return C


# -- Jacobian -----------------------------------------------------------------


def _xi(lam):
    """Divided differences of exp at log-eigenvalues, shape (..., n, n)."""
    L = np.log(lam)
    li, lj = lam[..., :, None], lam[..., None, :]
    dl = L[..., :, None] - L[..., None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        # (li - lj) / (log li - log lj) == lj * expm1(dl) / dl, stable for small dl
        ratio = np.where(dl == 0.0, 1.0, np.expm1(dl) / dl)
    xi = lj * ratio
    close = np.abs(li - lj) < XI_GAP
    return np.where(close, np.broadcast_to(li, xi.shape), xi)


def _jacobian_from_eig(lam, Q):
    n = lam.shape[-1]
    rows, cols = vecl_indices(n)
    dg = np.arange(n)
    xi = _xi(lam)
    # W[p, i, j] = Q[a_p, i] Q[b_p, j] for index pairs (a_p, b_p)
    Wl = Q[..., rows, :, None] * Q[..., cols, None, :]
    Wsym = Wl + np.swapaxes(Wl, -1, -2)
    Wd = Q[..., dg, :, None] * Q[..., dg, None, :]
    Wl_xi = Wl * xi[..., None, :, :]
    Wd_xi = Wd * xi[..., None, :, :]
    A_ll = np.einsum("...pij,...qij->...pq", Wl_xi, Wsym)
    A_ld = np.einsum("...pij,...qij->...pq", Wl_xi, Wd)
    A_dl = np.einsum("...pij,...qij->...pq", Wd_xi, Wsym)
    A_dd = np.einsum("...pij,...qij->...pq", Wd_xi, Wd)
    try:
        correction = A_ld @ np.linalg.solve(A_dd, A_dl)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("diagonal block of A_C is singular") from exc
    return A_ll - correction, xi


@dataclass(frozen=True)
class JacobianBundle:
    """Jacobian of vecl(C) with respect to gamma plus its spectral ingredients.

    ``xi`` is the symmetric n x n matrix of divided differences; ``Xi``
    flattens it to the n^2 diagonal of the Xi matrix in vec order.
    """

    J: np.ndarray
    psi: float
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    xi: np.ndarray

    @property
    def Xi(self) -> np.ndarray:
        return self.xi.ravel(order="F")

    @property
    def A_C(self) -> np.ndarray:
        """d vec(C) / d vec(log C) as a dense n^2 x n^2 matrix."""
        QQ = np.kron(self.eigenvectors, self.eigenvectors)
        return (QQ * self.Xi) @ QQ.T

    @property
    def det_J(self) -> float:
        return float(np.linalg.det(self.J))


def jacobian(C) -> JacobianBundle:
    """J = d vecl(C) / d gamma at C, and psi(C) = det(d gamma / d vecl C).

    Only index selections of A_C are formed; the dense A_C is available
    lazily on the returned bundle.  Dimensions above 50 are refused.
    """
    C = validate_corr(C)
    if C.ndim != 2:
        raise DimensionError("jacobian expects a single matrix")
    n = C.shape[0]
    if n > JACOBIAN_MAX_DIM:
        raise BoundExceeded(f"jacobian supports n <= {JACOBIAN_MAX_DIM}, got n={n}")
    lam, Q = _eigh(C)
    J, xi = _jacobian_from_eig(lam, Q)
    det = np.linalg.det(J)
    if det == 0.0:
        raise NumericalFailure("Jacobian is singular")
    return JacobianBundle(J=J, psi=float(1.0 / det), eigenvalues=lam, eigenvectors=Q, xi=xi)


def psi(C) -> np.ndarray:
    """psi(C) = 1 / det(J) for a matrix or a stack of matrices."""
    C = validate_corr(C)
    if C.shape[-1] > JACOBIAN_MAX_DIM:
        raise BoundExceeded(f"psi supports n <= {JACOBIAN_MAX_DIM}")
    lam, Q = _eigh(C)
    J, _ = _jacobian_from_eig(lam, Q)
    return 1.0 / np.linalg.det(J)


# -- densities ----------------------------------------------------------------


def gaussian_density(mean, cov) -> Callable[[np.ndarray], np.ndarray]:
    """Multivariate normal density on gamma-space, vectorized over rows."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    d = mean.shape[0]
    L = np.linalg.cholesky(cov)
    log_norm = -0.5 * d * math.log(2 * math.pi) - np.log(np.diag(L)).sum()

    def f(g):
        z = np.linalg.solve(L, (np.asarray(g, dtype=float) - mean).T).T
        return np.exp(log_norm - 0.5 * np.sum(z * z, axis=-1))

    return f


def logistic_density(mu: float = 0.0, s: float = 0.5) -> Callable[[np.ndarray], np.ndarray]:
    """Product of iid logistic(mu, s) densities; with n=2 and s=1/2 this is
    ``2 exp(-2g) / (1 + exp(-2g))^2``."""

    def f(g):
        t = (np.asarray(g, dtype=float) - mu) / s
        # log of e^{-t} / (s (1 + e^{-t})^2), symmetric in t
        logf = -np.abs(t) - 2.0 * np.log1p(np.exp(-np.abs(t))) - math.log(s)
        return np.exp(np.sum(np.atleast_1d(logf), axis=-1))

    return f


def density_corr(C, f_gamma: Callable[[np.ndarray], float]) -> float:
    """Density on correlation matrices induced by a density on gamma-space."""
    C = validate_corr(C)
    g = vecl(mat_log_spd(C))
    value = float(f_gamma(g))
    if not np.isfinite(value) or value < 0:
        raise ValueError(f"f_gamma returned {value!r}")
    return value * abs(jacobian(C).psi)


# -- eigenvalue bounds and irreducibility ---------------------------------------


@dataclass(frozen=True)
class BoundReport:
    """Smallest eigenvalue of C(gamma) against exp(-gamma_max).

    ``lower_conjectured`` uses K = n, which is a conjecture and is only
    audited, never relied on.
    """

    n: int
    gamma_max: float
    lambda_min: float
    upper: float
    lower_conjectured: float

    @property
    def upper_violated(self) -> bool:
        return self.lambda_min > self.upper + 1e-10

    @property
    def lower_violated(self) -> bool:
        return self.lambda_min < self.lower_conjectured


def min_eig_bounds(gamma, C=None) -> BoundReport:
    gamma = np.asarray(gamma, dtype=float)
    n = dim_from_len(gamma.shape[-1])
    if C is None:
        C = gamma_to_corr(gamma)
    gmax = float(np.abs(gamma).max()) if gamma.size else 0.0
    lam_min = float(np.linalg.eigvalsh(C)[0])
    return BoundReport(
        n=n,
        gamma_max=gmax,
        lambda_min=lam_min,
        upper=math.exp(-gmax),
        lower_conjectured=math.exp(-n * gmax),
    )


def is_irreducible(G) -> bool:
    """True iff the graph of nonzero off-diagonal entries of G is connected."""
    G = sym_matrix(G)
    n = G.shape[0]
    if n <= 1:
        return True
    adj = (G != 0.0)
    np.fill_diagonal(adj, False)
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for j in np.flatnonzero(adj[i] & ~seen):
            seen[j] = True
            queue.append(j)
    return bool(seen.all())
