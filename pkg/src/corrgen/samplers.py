"""Distributions on gamma-space and the equicorrelation Beta/logistic laws.

Each law is a small immutable description with a ``sample(n, rng, size)``
method returning gamma vectors of shape ``(d,)`` or ``(size, d)``.  Laws
round-trip through plain dicts (``to_dict`` / :func:`law_from_dict`) whose
``"variant"`` key selects the class; that is the JSON schema the CLI reads.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, ClassVar

import numpy as np

from .errors import DimensionError, DomainError, SamplingStarvation
from .gamma_map import gamma_to_corr, jacobian
from .linalg import cholesky, sym_matrix, vecl_indices

MAX_REJECTIONS = 10**6

_LAWS: dict[str, type] = {}


def _register(cls):
    _LAWS[cls.variant] = cls
    return cls


def _d(n: int) -> int:
    if n < 1:
        raise DimensionError(f"dimension must be positive, got {n}")
    return n * (n - 1) // 2


def _shape(size, d):
    return (d,) if size is None else (int(size), d)


class GammaLaw:
    variant: ClassVar[str]

    def sample(self, n: int, rng: np.random.Generator, size=None) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    # array-valued laws compare through their JSON description
    def __eq__(self, other):
        if not isinstance(other, GammaLaw):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(json.dumps(self.to_dict(), sort_keys=True))


def law_from_dict(spec: dict) -> GammaLaw:
    """Build a law from its JSON description (``{"variant": ..., ...}``)."""
    spec = dict(spec)
    try:
        cls = _LAWS[spec.pop("variant")]
    except KeyError as exc:
        raise ValueError(f"unknown or missing law variant; choose from {sorted(_LAWS)}") from exc
    return cls.from_dict(spec)


@_register
@dataclass(frozen=True)
class GaussianIID(GammaLaw):
    """gamma_k iid N(mu, omega2)."""

    mu: float = 0.0
    omega2: float = 1.0
    variant: ClassVar[str] = "gaussian_iid"

    def __post_init__(self):
        if self.omega2 < 0:
            raise DomainError("omega2 must be non-negative")

    def sample(self, n, rng, size=None):
        shape = _shape(size, _d(n))
        return self.mu + math.sqrt(self.omega2) * rng.standard_normal(shape)

    def to_dict(self):
        return {"variant": self.variant, "mu": self.mu, "omega2": self.omega2}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@_register
@dataclass(frozen=True, eq=False)
class GaussianFull(GammaLaw):
    """gamma ~ N(mean, cov) with a user supplied covariance."""

    mean: np.ndarray
    cov: np.ndarray
    variant: ClassVar[str] = "gaussian_full"

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = sym_matrix(self.cov)
        if cov.shape != (mean.size, mean.size):
            raise DimensionError("cov shape does not match mean")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "_chol", cholesky(cov))

    def sample(self, n, rng, size=None):
        d = _d(n)
        if self.mean.size != d:
            raise DimensionError(f"law has dimension {self.mean.size}, need {d}")
        z = rng.standard_normal(_shape(size, d))
        return self.mean + z @ self._chol.T

    def to_dict(self):
        return {"variant": self.variant, "mean": self.mean.tolist(), "cov": self.cov.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(mean=d["mean"], cov=d["cov"])


@dataclass(frozen=True)
class ScalarLaw:
    """Univariate component law used by :class:`ExchangeableLaw`."""

    kind: str = "normal"
    loc: float = 0.0
    scale: float = 1.0

    KINDS: ClassVar[tuple] = ("zero", "normal", "uniform", "logistic")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown scalar law {self.kind!r}; choose from {self.KINDS}")

    def draw(self, rng, shape):
        if self.kind == "zero":
            return np.full(shape, float(self.loc))
        if self.kind == "normal":
            return rng.normal(self.loc, self.scale, shape)
        if self.kind == "uniform":
            return rng.uniform(self.loc - self.scale, self.loc + self.scale, shape)
        return rng.logistic(self.loc, self.scale, shape)

    def to_dict(self):
        return {"kind": self.kind, "loc": self.loc, "scale": self.scale}


def _h_sum(z, xi_i, xi_j, eps):
    return z + xi_i + xi_j + eps


def _h_product(z, xi_i, xi_j, eps):
    return z + xi_i * xi_j + eps


def _h_zero(z, xi_i, xi_j, eps):
    return np.zeros(np.broadcast_shapes(np.shape(z), np.shape(xi_i), np.shape(eps)))


COMBINERS: dict[str, Callable] = {"sum": _h_sum, "product": _h_product, "zero": _h_zero}


@_register
@dataclass(frozen=True)
class ExchangeableLaw(GammaLaw):
    """G_ij = h(zeta, xi_i, xi_j, eps_ij) for i > j.

    zeta, the iid xi_1..xi_n and the iid eps_ij are drawn from three
    independent child streams of the caller's generator.  The combiner
    must be symmetric in its two xi arguments.
    """

    common: ScalarLaw = field(default_factory=lambda: ScalarLaw("zero"))
    index: ScalarLaw = field(default_factory=lambda: ScalarLaw("zero"))
    pair: ScalarLaw = field(default_factory=ScalarLaw)
    combiner: str = "sum"
    variant: ClassVar[str] = "exchangeable"

    def __post_init__(self):
        if self.combiner not in COMBINERS:
            raise ValueError(f"unknown combiner {self.combiner!r}; choose from {sorted(COMBINERS)}")

    def sample(self, n, rng, size=None):
        d = _d(n)
        m = 1 if size is None else int(size)
        s_common, s_index, s_pair = rng.spawn(3)
        zeta = self.common.draw(s_common, (m, 1))
        xi = self.index.draw(s_index, (m, n))
        eps = self.pair.draw(s_pair, (m, d))
        rows, cols = vecl_indices(n)
        g = COMBINERS[self.combiner](zeta, xi[:, rows], xi[:, cols], eps)
        return g[0] if size is None else g

    def to_dict(self):
        return {
            "variant": self.variant,
            "common": self.common.to_dict(),
            "index": self.index.to_dict(),
            "pair": self.pair.to_dict(),
            "combiner": self.combiner,
        }

    @classmethod
    def from_dict(cls, d):
        parts = {k: ScalarLaw(**d[k]) for k in ("common", "index", "pair") if k in d}
        return cls(combiner=d.get("combiner", "sum"), **parts)


@_register
@dataclass(frozen=True, eq=False)
class PerturbedTarget(GammaLaw):
    """gamma0 + eps, with eps drawn from ``noise``; gamma0 = g(C0)."""

    gamma0: np.ndarray
    noise: GammaLaw = field(default_factory=GaussianIID)
    variant: ClassVar[str] = "perturbed_target"

    def __post_init__(self):
        object.__setattr__(self, "gamma0", np.atleast_1d(np.asarray(self.gamma0, dtype=float)))

    def sample(self, n, rng, size=None):
        if self.gamma0.size != _d(n):
            raise DimensionError("gamma0 does not match n")
        return self.gamma0 + self.noise.sample(n, rng, size)

    def to_dict(self):
        return {"variant": self.variant, "gamma0": self.gamma0.tolist(), "noise": self.noise.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(gamma0=d["gamma0"], noise=law_from_dict(d.get("noise", {"variant": "gaussian_iid"})))


@_register
@dataclass(frozen=True, eq=False)
class HeteroJacobian(GammaLaw):
    """gamma ~ N(gamma0, J0^-1 diag(scales) J0^-T), J0 the Jacobian at C(gamma0).

    To first order this gives var(vecl C) ~ diag(scales).
    """

    gamma0: np.ndarray
    scales: np.ndarray
    variant: ClassVar[str] = "hetero_jacobian"

    def __post_init__(self):
        g0 = np.atleast_1d(np.asarray(self.gamma0, dtype=float))
        lam = np.atleast_1d(np.asarray(self.scales, dtype=float))
        if lam.shape != g0.shape:
            raise DimensionError("scales must match gamma0")
        if np.any(lam <= 0):
            raise DomainError("scales must be positive")
        J0 = jacobian(gamma_to_corr(g0)).J
        Jinv = np.linalg.inv(J0)
        cov = sym_matrix((Jinv * lam) @ Jinv.T)
        w, V = np.linalg.eigh(cov)
        root = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T
        object.__setattr__(self, "gamma0", g0)
        object.__setattr__(self, "scales", lam)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "_root", root)

    def sample(self, n, rng, size=None):
        d = _d(n)
        if self.gamma0.size != d:
            raise DimensionError("gamma0 does not match n")
        z = rng.standard_normal(_shape(size, d))
        return self.gamma0 + z @ self._root.T

    def to_dict(self):
        return {"variant": self.variant, "gamma0": self.gamma0.tolist(), "scales": self.scales.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(gamma0=d["gamma0"], scales=d["scales"])


@_register
@dataclass(frozen=True)
class Bounded(GammaLaw):
    """Restrict a base law to max_k |gamma_k| <= bound.

    ``mode="reject"`` redraws whole vectors and keeps the shape of the law
    inside the box; ``mode="clip"`` piles mass onto the box faces.
    """

    base: GammaLaw
    bound: float
    mode: str = "reject"
    variant: ClassVar[str] = "bounded"

    def __post_init__(self):
        if not self.bound > 0:
            raise DomainError("bound must be positive")
        if self.mode not in ("reject", "clip"):
            raise ValueError("mode must be 'reject' or 'clip'")

    def sample(self, n, rng, size=None):
        if self.mode == "clip":
            return np.clip(self.base.sample(n, rng, size), -self.bound, self.bound)
        m = 1 if size is None else int(size)
        out = np.empty((m, _d(n)))
        filled = 0
        streak = 0
        while filled < m:
            want = m - filled
            g = np.atleast_2d(self.base.sample(n, rng, want))
            ok = g if g.shape[1] == 0 else g[np.abs(g).max(axis=1) <= self.bound]
            out[filled : filled + len(ok)] = ok
            filled += len(ok)
            streak = 0 if len(ok) else streak + want
            if streak >= MAX_REJECTIONS:
                raise SamplingStarvation(f"{streak} consecutive rejections at bound {self.bound}")
        return out[0] if size is None else out

    def to_dict(self):
        return {"variant": self.variant, "base": self.base.to_dict(), "bound": self.bound, "mode": self.mode}

    @classmethod
    def from_dict(cls, d):
        return cls(base=law_from_dict(d["base"]), bound=d["bound"], mode=d.get("mode", "reject"))


@_register
@dataclass(frozen=True)
class NonNegative(GammaLaw):
    """gamma_k = |base_k| + shift; any shift > 0 gives strictly positive C."""

    base: GammaLaw = field(default_factory=GaussianIID)
    shift: float = 0.0
    variant: ClassVar[str] = "nonnegative"

    def __post_init__(self):
        if self.shift < 0:
            raise DomainError("shift must be non-negative")

    def sample(self, n, rng, size=None):
        return np.abs(self.base.sample(n, rng, size)) + self.shift

    def to_dict(self):
        return {"variant": self.variant, "base": self.base.to_dict(), "shift": self.shift}

    @classmethod
    def from_dict(cls, d):
        base = law_from_dict(d.get("base", {"variant": "gaussian_iid"}))
        return cls(base=base, shift=d.get("shift", 0.0))


@_register
@dataclass(frozen=True)
class EquiLogistic(GammaLaw):
    """gamma = (z, ..., z) with z from the type IV generalized logistic law.

    Location log(n-1)/n and scale 1/n; sampled as z = mu + s logit(B) with
    B ~ Beta(alpha, beta).  alpha = beta = 1 is the plain logistic.
    """

    alpha: float = 1.0
    beta: float = 1.0
    variant: ClassVar[str] = "equi_logistic"

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise DomainError("alpha and beta must be positive")

    def sample(self, n, rng, size=None):
        m = 1 if size is None else int(size)
        law = EquiLaw(n, self.alpha, self.beta)
        if self.alpha == 1.0 and self.beta == 1.0:
            z = rng.logistic(law.mu, law.s, m)
        else:
            b = rng.beta(self.alpha, self.beta, m)
            z = law.mu + law.s * (np.log(b) - np.log1p(-b))
        g = np.repeat(z[:, None], _d(n), axis=1)
        return g[0] if size is None else g

    def to_dict(self):
        return {"variant": self.variant, "alpha": self.alpha, "beta": self.beta}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def sample_gamma(law: GammaLaw, n: int, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw gamma vector(s) for n x n correlation matrices from ``law``."""
    return law.sample(n, rng, size)


def sample_gamma_exchangeable(law: ExchangeableLaw, n: int, rng, size=None) -> np.ndarray:
    return law.sample(n, rng, size)


# -- equicorrelation ----------------------------------------------------------


def z_of_r(r, n: int):
    """Common element of log C for an n x n equicorrelation matrix with value r."""
    r = np.asarray(r, dtype=float)
    if n < 2:
        raise DomainError("n must be at least 2")
    if np.any(r <= -1.0 / (n - 1)) or np.any(r >= 1.0):
        raise DomainError(f"r must lie in (-1/(n-1), 1) = ({-1.0 / (n - 1)}, 1)")
    z = (np.log1p((n - 1) * r) - np.log1p(-r)) / n
    return z[()] if z.ndim == 0 else z


def r_of_z(z, n: int):
    """Inverse of :func:`z_of_r`."""
    z = np.asarray(z, dtype=float)
    if n < 2:
        raise DomainError("n must be at least 2")
    t = n * z
    # np.where evaluates both branches; the unused one may overflow
    with np.errstate(over="ignore", invalid="ignore"):
        pos = -np.expm1(-t) / (1.0 + (n - 1) * np.exp(-t))
        neg = np.expm1(t) / (np.exp(t) + (n - 1))
    r = np.where(t >= 0, pos, neg)
    return r[()] if r.ndim == 0 else r


@dataclass(frozen=True)
class EquiLaw:
    """r ~ Beta(alpha, beta) rescaled to (-1/(n-1), 1)."""

    n: int
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.n < 2:
            raise DomainError("n must be at least 2")
        if not (self.alpha > 0 and self.beta > 0):
            raise DomainError("alpha and beta must be positive")

    @property
    def mu(self) -> float:
        return math.log(self.n - 1) / self.n

    @property
    def s(self) -> float:
        return 1.0 / self.n

    @property
    def lower(self) -> float:
        return -1.0 / (self.n - 1)


def sample_equicorrelation(law: EquiLaw, rng: np.random.Generator, size=None) -> np.ndarray:
    """Equicorrelation matrices C(z 1) with r Beta-distributed on its range."""
    m = 1 if size is None else int(size)
    b = rng.beta(law.alpha, law.beta, m)
    r = law.lower + b * (1.0 - law.lower)
    # Beta draws can round to an endpoint of (0, 1)
    r = np.clip(r, np.nextafter(law.lower, 1.0), np.nextafter(1.0, 0.0))
    z = z_of_r(r, law.n)
    d = law.n * (law.n - 1) // 2
    C = gamma_to_corr(np.repeat(np.atleast_1d(z)[:, None], d, axis=1))
    return C[0] if size is None else C


def equi_z_variance(n: int) -> float:
    """Variance of z under the logistic law with scale 1/n."""
    if n < 2:
        raise DomainError("n must be at least 2")
    return math.pi**2 / 3.0 / n**2
