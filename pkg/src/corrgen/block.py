"""Block correlation matrices through the canonical representation.

A block correlation matrix with K blocks of sizes n_1..n_K has a log with
the same pattern: diagonal y_k and off-diagonal gamma_kk inside block k,
constant gamma_kl between blocks k and l.  With a fixed orthonormal Q,
``G = Q D Q'`` where D holds the K x K matrix ``A + diag(y)`` followed by
the scalars ``y_k - gamma_kk`` repeated n_k - 1 times.  Solving for y and
assembling C therefore needs only K x K matrix exponentials.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError, InvalidState, IterationLimit
from .gamma_map import gamma_to_corr
from .linalg import _eigh, apply_permutation, spectral_apply, vecl


@dataclass(frozen=True, eq=False)
class BlockSpec:
    """Block sizes and the symmetric K x K matrix of log-matrix values.

    ``gammas[k, k]`` is ignored (treated as 0) for singleton blocks.
    """

    sizes: tuple
    gammas: np.ndarray

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if not sizes or min(sizes) < 1:
            raise DimensionError("block sizes must be positive integers")
        g = np.array(self.gammas, dtype=float).reshape(len(sizes), len(sizes))
        if not np.array_equal(g, g.T):
            raise ValueError("block gammas must be symmetric")
        if not np.all(np.isfinite(g)):
            raise ValueError("block gammas must be finite")
        single = np.array(sizes) == 1
        g[single, single] = 0.0
        g.flags.writeable = False
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "gammas", g)

    @property
    def K(self) -> int:
        return len(self.sizes)

    @property
    def n(self) -> int:
        return sum(self.sizes)

    @property
    def labels(self) -> np.ndarray:
        """Block index of every row."""
        return np.repeat(np.arange(self.K), self.sizes)

    def to_dict(self) -> dict:
        return {"sizes": list(self.sizes), "gammas": self.gammas.tolist()}

    @classmethod
    def from_dict(cls, d) -> "BlockSpec":
        return cls(sizes=d["sizes"], gammas=d["gammas"])


@dataclass(frozen=True, eq=False)
class BlockSolution:
    y: np.ndarray
    A: np.ndarray
    iterations: int
    residual: float
    converged: bool


def _A_matrix(spec: BlockSpec) -> np.ndarray:
    nk = np.asarray(spec.sizes, dtype=float)
    A = spec.gammas * np.sqrt(np.outer(nk, nk))
    np.fill_diagonal(A, np.diag(spec.gammas) * (nk - 1))
    return A


def _helmert(m: int) -> np.ndarray:
    """m x (m-1) orthonormal basis of the complement of the ones vector."""
    H = np.zeros((m, m - 1))
    for j in range(1, m):
        H[:j, j - 1] = 1.0
        H[j, j - 1] = -j
        H[:, j - 1] /= np.sqrt(j * (j + 1))
    return H


def canonical_basis(spec: BlockSpec) -> np.ndarray:
    """Orthonormal Q with ``Q' G Q = D`` for every G with this block pattern.

    Columns 0..K-1 are normalized block indicators; the rest are Helmert
    complements for blocks 0, 1, ... in order.
    """
    n, K = spec.n, spec.K
    Q = np.zeros((n, n))
    starts = np.concatenate([[0], np.cumsum(spec.sizes)[:-1]])
    col = K
    for k, (s, m) in enumerate(zip(starts, spec.sizes)):
        Q[s : s + m, k] = 1.0 / np.sqrt(m)
        if m > 1:
            Q[s : s + m, col : col + m - 1] = _helmert(m)
            col += m - 1
    return Q


def build_D(spec: BlockSpec, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape != (spec.K,):
        raise DimensionError(f"y must have length K={spec.K}")
    K = spec.K
    D = np.zeros((spec.n, spec.n))
    D[:K, :K] = _A_matrix(spec) + np.diag(y)
    tail = np.repeat(y - np.diag(spec.gammas), np.asarray(spec.sizes) - 1)
    idx = np.arange(K, spec.n)
    D[idx, idx] = tail
    return D


def dense_log_matrix(spec: BlockSpec, y) -> np.ndarray:
    """G[y] assembled elementwise from the block pattern."""
    lab = spec.labels
    G = spec.gammas[np.ix_(lab, lab)].copy()
    np.fill_diagonal(G, np.asarray(y, dtype=float)[lab])
    return G


def _expm_small(S):
    lam, V = _eigh(S)
    return spectral_apply(V, np.exp(lam))


def _q(spec, A, y):
    nk = np.asarray(spec.sizes, dtype=float)
    M = _expm_small(A + np.diag(y))
    within = np.exp(y - np.diag(spec.gammas))
    return (np.diag(M) + (nk - 1) * within) / nk, M


def solve_block_diagonal(spec: BlockSpec, tol: float = 1e-12, max_iter: int = 1000, y0=None) -> BlockSolution:
    """Find y with unit diagonal of exp(G[y]) by the K-dimensional contraction

    ``y <- y - log q(y)``, where q_k(y) is the common diagonal value of
    block k of exp(G[y]).
    """
    A = _A_matrix(spec)
    y = np.zeros(spec.K) if y0 is None else np.array(y0, dtype=float)
    if y.shape != (spec.K,):
        raise DimensionError(f"y0 must have length K={spec.K}")
    for it in range(1, max_iter + 1):
        q, _ = _q(spec, A, y)
        step = -np.log(q)
        y = y + step
        if np.abs(step).max() < tol:
            break
    else:
        q, _ = _q(spec, A, y)
        residual = float(np.abs(q - 1.0).max())
        raise IterationLimit(
            f"block solver did not converge in {max_iter} iterations (residual {residual:.3e})",
            residual=residual,
            iterations=max_iter,
        )
    q, _ = _q(spec, A, y)
    return BlockSolution(y=y, A=A, iterations=it, residual=float(np.abs(q - 1.0).max()), converged=True)


def block_corr(spec: BlockSpec, sol: BlockSolution, tol: float = 1e-8) -> np.ndarray:
    """Closed-form C = exp(G[y*]); only a K x K exponential is evaluated."""
    if sol is None or not sol.converged or sol.residual > tol:
        raise InvalidState("block_corr needs a converged BlockSolution")
    nk = np.asarray(spec.sizes, dtype=float)
    M = _expm_small(sol.A + np.diag(sol.y))
    values = M / np.sqrt(np.outer(nk, nk))
    within = (np.diag(M) - np.exp(sol.y - np.diag(spec.gammas))) / nk
    np.fill_diagonal(values, within)
    lab = spec.labels
    C = values[np.ix_(lab, lab)]
    np.fill_diagonal(C, 1.0)
    return C


@dataclass(frozen=True)
class BlockLaw:
    """Random block gammas: gamma_kl = (mu + sqrt(omega2) Z_kl) / n, symmetric."""

    sizes: tuple
    mu: float = 0.0
    omega2: float = 1.0

    def __post_init__(self):
        if self.omega2 < 0:
            raise DomainError("omega2 must be non-negative")
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))

    def draw_spec(self, rng: np.random.Generator) -> BlockSpec:
        K = len(self.sizes)
        n = sum(self.sizes)
        Z = rng.standard_normal((K, K))
        Z = np.triu(Z) + np.triu(Z, 1).T
        return BlockSpec(self.sizes, (self.mu + np.sqrt(self.omega2) * Z) / n)


def sample_block_corr(law, rng: np.random.Generator | None = None) -> np.ndarray:
    """Block correlation matrix from a :class:`BlockLaw` or a fixed :class:`BlockSpec`."""
    spec = law if isinstance(law, BlockSpec) else law.draw_spec(rng)
    return block_corr(spec, solve_block_diagonal(spec))


def random_permutation(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(n)


@dataclass(frozen=True, eq=False)
class MixtureSpec:
    """Convex combination of permuted block correlation matrices.

    ``components`` holds BlockSpec or BlockLaw entries; ``permutations``
    may fix P_m per component, otherwise uniform permutations are drawn.
    """

    weights: tuple
    components: tuple
    permutations: tuple | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or len(w) != len(self.components) or len(w) == 0:
            raise DimensionError("need one weight per component")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise DomainError("weights must be non-negative and sum to one")
        sizes = {sum(c.sizes) for c in self.components}
        if len(sizes) != 1:
            raise DimensionError("components must share the dimension n")
        if self.permutations is not None and len(self.permutations) != len(w):
            raise DimensionError("need one permutation per component")
        object.__setattr__(self, "weights", tuple(w))
        object.__setattr__(self, "components", tuple(self.components))

    @property
    def M(self) -> int:
        return len(self.weights)

    @property
    def n(self) -> int:
        return sum(self.components[0].sizes)

    @classmethod
    def uniform(cls, sizes, M: int, mu: float = 0.0, omega2: float = 1.0) -> "MixtureSpec":
        """M equally weighted components drawn from the same BlockLaw."""
        law = BlockLaw(tuple(sizes), mu, omega2)
        return cls(weights=(1.0 / M,) * M, components=(law,) * M)


def sample_mixture(mix: MixtureSpec, rng: np.random.Generator):
    """Return ``(C, lambda_min)`` for ``C = sum_m w_m P_m C_m P_m'``."""
    n = mix.n
    C = np.zeros((n, n))
    for m, (w, comp) in enumerate(zip(mix.weights, mix.components)):
        Cm = sample_block_corr(comp, rng)
        perm = mix.permutations[m] if mix.permutations is not None else random_permutation(n, rng)
        C += w * apply_permutation(Cm, perm)
    C = 0.5 * (C + C.T)
    np.fill_diagonal(C, 1.0)
    return C, float(np.linalg.eigvalsh(C)[0])


def bench_block_vs_dense(spec: BlockSpec, repeats: int = 3, dense_max_n: int = 400) -> dict:
    """Wall-clock comparison of the block solver with the generic n x n path."""

    def best(fn):
        times = []
        out = None
        for _ in range(repeats):
            t0 = time.perf_counter()
            out = fn()
            times.append(time.perf_counter() - t0)
        return min(times), out

    t_block, C_block = best(lambda: block_corr(spec, solve_block_diagonal(spec)))
    report = {"n": spec.n, "K": spec.K, "block_seconds": t_block}
    if spec.n <= dense_max_n:
        gamma = vecl(dense_log_matrix(spec, np.zeros(spec.K)))
        t_dense, C_dense = best(lambda: gamma_to_corr(gamma))
        report.update(
            dense_seconds=t_dense,
            speedup=t_dense / t_block,
            max_abs_diff=float(np.abs(C_block - C_dense).max()),
        )
    return report
