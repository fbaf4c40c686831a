"""Statistical checks for the distributional and structural claims.

Every check produces a plain dict
``{check, method, n, N, statistic, threshold, pass, seed}`` so reports
serialize straight to JSON.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import baselines, block, samplers
from .gamma_map import corr_to_gamma, gamma_to_corr, jacobian
from .linalg import vecl

# -- KS statistics ------------------------------------------------------------


@dataclass(frozen=True)
class KSResult:
    statistic: float
    sample_size: int
    threshold: float

    @property
    def passed(self) -> bool:
        return self.statistic <= self.threshold

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "sample_size": self.sample_size,
                "threshold": self.threshold, "pass": self.passed}


def ks_threshold(N: int) -> float:
    """Default pass threshold, max(0.01, 1.63 / sqrt(N))."""
    return max(0.01, 1.63 / math.sqrt(N))


def ks_one_sample(samples, cdf, threshold: float | None = None) -> KSResult:
    """sup_x |F_N(x) - F(x)| for a vectorized reference CDF."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    N = x.size
    if N < 100:
        raise ValueError("KS needs at least 100 samples")
    F = np.asarray(cdf(x), dtype=float)
    upper = np.arange(1, N + 1) / N - F
    lower = F - np.arange(0, N) / N
    D = float(max(upper.max(), lower.max(), 0.0))
    return KSResult(min(D, 1.0), N, ks_threshold(N) if threshold is None else threshold)


def ks_two_sample(a, b, threshold: float | None = None) -> KSResult:
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if min(a.size, b.size) < 100:
        raise ValueError("KS needs at least 100 samples per group")
    grid = np.concatenate([a, b])
    Fa = np.searchsorted(a, grid, side="right") / a.size
    Fb = np.searchsorted(b, grid, side="right") / b.size
    D = float(np.abs(Fa - Fb).max())
    n_eff = a.size * b.size // (a.size + b.size)
    return KSResult(D, n_eff, ks_threshold(n_eff) if threshold is None else threshold)


# -- CDFs ---------------------------------------------------------------------


def _betacf(x, a, b, max_iter=500, eps=1e-16):
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (x={x}, a={a}, b={b})")


def _beta_cdf_scalar(x, a, b):
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = a * math.log(x) + b * math.log1p(-x) - (math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(x, a, b) / a
    return 1.0 - front * _betacf(1.0 - x, b, a) / b


def beta_cdf(x, a: float, b: float):
    """Regularized incomplete beta I_x(a, b)."""
    if not (a > 0 and b > 0):
        raise ValueError("beta shapes must be positive")
    x = np.asarray(x, dtype=float)
    out = np.array([_beta_cdf_scalar(float(v), a, b) for v in x.ravel()]).reshape(x.shape)
    return out[()] if out.ndim == 0 else out


def beta_cdf_interval(x, a: float, b: float, lo: float, hi: float):
    """CDF of lo + (hi - lo) B with B ~ Beta(a, b)."""
    return beta_cdf((np.asarray(x, dtype=float) - lo) / (hi - lo), a, b)


def _log_logistic4_pdf(t, alpha, beta):
    # t = (z - mu) / s; density per unit t, without the 1/B(alpha, beta) factor
    return -beta * t - (alpha + beta) * np.logaddexp(0.0, -t)


def _logistic4_cdf_scalar(z, alpha, beta, mu, s):
    t = (z - mu) / s
    log_B = math.lgamma(alpha) + math.lgamma(beta) - math.lgamma(alpha + beta)

    def pdf(u):
        return math.exp(_log_logistic4_pdf(u, alpha, beta) - log_B)

    # outside [lo, hi] the mass is below 1e-18 (tails decay as e^{alpha t}, e^{-beta t})
    lo = (math.log(1e-18 * alpha) + log_B) / alpha
    hi = -(math.log(1e-18 * beta) + log_B) / beta
    opts = dict(epsabs=1e-14, epsrel=1e-12, limit=200)
    if t <= lo:
        return math.exp(alpha * t - log_B) / alpha
    if t >= hi:
        return 1.0 - math.exp(-beta * t - log_B) / beta
    mode = math.log(alpha / beta)
    if t <= mode:
        left_tail = math.exp(alpha * lo - log_B) / alpha
        val, _ = integrate.quad(pdf, lo, t, **opts)
        return min(1.0, left_tail + val)
    right_tail = math.exp(-beta * hi - log_B) / beta
    val, _ = integrate.quad(pdf, t, hi, **opts)
    return max(0.0, 1.0 - right_tail - val)


def logistic4_cdf(z, alpha: float, beta: float, mu: float, s: float):
    """CDF of the type IV generalized logistic density by adaptive quadrature."""
    if not (alpha > 0 and beta > 0 and s > 0):
        raise ValueError("alpha, beta and s must be positive")
    z = np.asarray(z, dtype=float)
    out = np.array([_logistic4_cdf_scalar(float(v), alpha, beta, mu, s) for v in z.ravel()]).reshape(z.shape)
    return out[()] if out.ndim == 0 else out


# -- reports ------------------------------------------------------------------


def check(name, method, n, N, statistic, threshold, passed, seed, **extra) -> dict:
    rec = {
        "check": name,
        "method": method,
        "n": n,
        "N": N,
        "statistic": float(statistic),
        "threshold": float(threshold),
        "pass": bool(passed),
        "seed": seed,
    }
    rec.update(extra)
    return rec


QUANTILE_LEVELS = (0.05, 0.25, 0.5, 0.75, 0.95)


@dataclass(frozen=True, eq=False)
class MarginalReport:
    """Per-position summaries of vecl(C) over a sample of matrices.

    ``quantiles`` has shape (d, len(QUANTILE_LEVELS)); ``pairwise_ks`` is the
    symmetric d x d matrix of two-sample KS statistics.
    """

    mean: np.ndarray
    variance: np.ndarray
    quantiles: np.ndarray
    pairwise_ks: np.ndarray

    @property
    def d(self) -> int:
        return self.mean.shape[0]

    @property
    def max_pairwise_ks(self) -> float:
        return float(self.pairwise_ks.max()) if self.d > 1 else 0.0

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("mean", "variance", "quantiles", "pairwise_ks")}


def marginal_report(samples) -> MarginalReport:
    """Summaries of each vecl position and the pairwise two-sample KS matrix."""
    V = vecl(np.asarray(samples, dtype=float))
    d = V.shape[1]
    ks = np.zeros((d, d))
    for i in range(d):
        for j in range(i + 1, d):
            ks[i, j] = ks[j, i] = ks_two_sample(V[:, i], V[:, j]).statistic
    return MarginalReport(
        mean=V.mean(axis=0),
        variance=V.var(axis=0, ddof=1),
        quantiles=np.quantile(V, QUANTILE_LEVELS, axis=0).T,
        pairwise_ks=ks,
    )


def validity_rate(n: int, trials: int, rng: np.random.Generator):
    """Naive-method acceptance probability and its binomial standard error."""
    if trials < 10**4:
        raise ValueError("validity_rate needs at least 10^4 trials")
    accepted = baselines.naive_accept(n, trials, rng).shape[0]
    p = accepted / trials
    return p, math.sqrt(p * (1 - p) / trials)


def _chunks(N, size=100_000):
    while N > 0:
        m = min(size, N)
        yield m
        N -= m


def bound_audit(law, n: int, N: int, rng: np.random.Generator) -> dict:
    """Count upper-bound and conjectured lower-bound violations over N draws."""
    upper_viol = lower_viol = 0
    worst_upper = -np.inf
    for m in _chunks(N):
        g = samplers.sample_gamma(law, n, rng, m)
        C = gamma_to_corr(g)
        lam_min = np.linalg.eigvalsh(C)[:, 0]
        gmax = np.abs(g).max(axis=1)
        excess = lam_min - np.exp(-gmax)
        worst_upper = max(worst_upper, float(excess.max()))
        upper_viol += int(np.sum(excess > 1e-10))
        lower_viol += int(np.sum(lam_min < np.exp(-n * gmax)))
    return {"upper_violations": upper_viol, "lower_conjecture_violations": lower_viol, "max_excess": worst_upper}


# -- suites ---------------------------------------------------------------------


def _suite_roundtrip(n, N, seed):
    rng = np.random.default_rng(seed)
    out = []
    for dim in ([n] if n else [2, 3, 5, 10, 25]):
        g = rng.uniform(-1.5, 1.5, (N, dim * (dim - 1) // 2))
        err = float(np.abs(corr_to_gamma(gamma_to_corr(g)) - g).max())
        out.append(check("gamma_roundtrip", "gamma", dim, N, err, 1e-8, err <= 1e-8, seed))
    return out


def _suite_bounds(n, N, seed):
    n = n or 5
    rep = bound_audit(samplers.GaussianIID(0.0, 1.0), n, N, np.random.default_rng(seed))
    return [
        check("eigen_upper_bound", "gamma-gaussian", n, N, rep["upper_violations"], 0,
              rep["upper_violations"] == 0, seed, max_excess=rep["max_excess"]),
        check("eigen_lower_bound_conjectured_K_eq_n", "gamma-gaussian", n, N,
              rep["lower_conjecture_violations"], 0, rep["lower_conjecture_violations"] == 0, seed),
    ]


def _suite_marginals(n, N, seed):
    n = n or 4
    rng = np.random.default_rng(seed)
    law = samplers.ExchangeableLaw(
        common=samplers.ScalarLaw("normal"), index=samplers.ScalarLaw("normal"),
        pair=samplers.ScalarLaw("normal"), combiner="product",
    )
    V = vecl(gamma_to_corr(law.sample(n, rng, N)))
    worst = max(ks_two_sample(V[:, i], V[:, j]).statistic
                for i in range(V.shape[1]) for j in range(i + 1, V.shape[1]))
    thr = max(0.015, ks_threshold(N // 2))
    return [check("exchangeable_marginals_pairwise_ks", "exchangeable", n, N, worst, thr, worst < thr, seed)]


def _suite_equicorrelation(n, N, seed):
    rng = np.random.default_rng(seed)
    out = []
    for dim in ([n] if n else [3, 10]):
        for a, b in ((1.0, 1.0), (3.0, 2.0)):
            law = samplers.EquiLaw(dim, a, b)
            r = samplers.sample_equicorrelation(law, rng, N)[:, 1, 0]
            ks = ks_one_sample(r, lambda x: beta_cdf_interval(x, a, b, law.lower, 1.0))
            out.append(check(f"equicorrelation_beta({a:g},{b:g})", "equicorrelation", dim, N,
                             ks.statistic, ks.threshold, ks.passed, seed))
    return out


def _suite_pac(n, N, seed):
    n = n or 4
    alpha = float(max(2.0, n / 2))
    rng = np.random.default_rng(seed)
    C = baselines.pac_sample(n, alpha, rng, size=N)
    p = baselines.corr_to_partials(C)
    det_res = float(np.max(np.abs(baselines.partial_det(p) / np.linalg.det(C) - 1.0)))
    rt = float(np.abs(baselines.partials_to_corr(p) - C).max())
    V = vecl(C)
    ks = max(ks_one_sample(V[:, k], lambda x: beta_cdf_interval(x, alpha, alpha, -1.0, 1.0)).statistic
             for k in range(V.shape[1]))
    thr = max(0.012, ks_threshold(N))
    return [
        check("pac_determinant_identity", "pac", n, N, det_res, 1e-10, det_res < 1e-10, seed),
        check("pac_roundtrip", "pac", n, N, rt, 1e-10, rt < 1e-10, seed),
        check("pac_beta_marginals", "pac", n, N, ks, thr, ks < thr, seed, alpha=alpha),
    ]


def _suite_naive_rate(n, N, seed):
    rng = np.random.default_rng(seed)
    out = []
    p3, se = validity_rate(3, max(N, 10**4), rng)
    oracle = math.pi**2 / 16
    out.append(check("naive_rate_n3", "naive", 3, max(N, 10**4), p3, 0.01, abs(p3 - oracle) <= 0.01, seed,
                     oracle=oracle, stderr=se))
    p6, se6 = validity_rate(6, max(N, 10**4), rng)
    out.append(check("naive_rate_n6", "naive", 6, max(N, 10**4), p6, 0.001, p6 < 0.001, seed, stderr=se6))
    return out


def _suite_block(n, N, seed):
    rng = np.random.default_rng(seed)
    worst_res = worst_diff = worst_y = worst_start = 0.0
    count = max(1, min(N, 100))
    for _ in range(count):
        K = int(rng.integers(1, 7))
        sizes = rng.integers(1, max(2, (n or 60) // K) + 1, K)
        spec = block.BlockLaw(tuple(sizes), 0.0, float(rng.uniform(0.5, 4.0))).draw_spec(rng)
        s0 = block.solve_block_diagonal(spec)
        s1 = block.solve_block_diagonal(spec, y0=-np.ones(K))
        C = block.block_corr(spec, s0)
        G = block.dense_log_matrix(spec, s0.y)
        dense = gamma_to_corr(vecl(G))
        worst_res = max(worst_res, s0.residual)
        worst_diff = max(worst_diff, float(np.abs(C - dense).max()))
        worst_y = max(worst_y, float(s0.y.max()))
        worst_start = max(worst_start, float(np.abs(s0.y - s1.y).max()))
    return [
        check("block_residual", "block", n, count, worst_res, 1e-10, worst_res <= 1e-10, seed),
        check("block_vs_dense", "block", n, count, worst_diff, 1e-8, worst_diff <= 1e-8, seed),
        check("block_y_nonpositive", "block", n, count, worst_y, 1e-10, worst_y <= 1e-10, seed),
        check("block_start_independence", "block", n, count, worst_start, 1e-10, worst_start <= 1e-10, seed),
    ]


def _suite_jacobian(n, N, seed):
    C0 = gamma_to_corr(np.full(3, 0.25))
    jb = jacobian(C0)
    J, Jinv = jb.J, np.linalg.inv(jb.J)
    off = ~np.eye(3, dtype=bool)
    golden = max(
        np.abs(np.diag(J) - 0.920).max(), np.abs(J[off] - 0.102).max(),
        np.abs(np.diag(Jinv) - 1.111).max(), np.abs(Jinv[off] + 0.111).max(),
    )
    det_res = abs(jb.det_J * jb.psi - 1.0)
    fd = finite_difference_jacobian(np.full(3, 0.25))
    fd_err = float(np.abs(fd - J).max())
    return [
        check("jacobian_golden_values", "gamma", 3, 1, golden, 1e-3, golden <= 1e-3, seed),
        check("jacobian_det_times_psi", "gamma", 3, 1, det_res, 1e-6, det_res <= 1e-6, seed),
        check("jacobian_finite_difference", "gamma", 3, 1, fd_err, 1e-4, fd_err <= 1e-4, seed),
    ]


SUITES = {
    "roundtrip": _suite_roundtrip,
    "bounds": _suite_bounds,
    "marginals": _suite_marginals,
    "equicorrelation": _suite_equicorrelation,
    "pac-identities": _suite_pac,
    "naive-rate": _suite_naive_rate,
    "block": _suite_block,
    "jacobian": _suite_jacobian,
}

SUITE_DEFAULT_N = {
    "roundtrip": 1000,
    "bounds": 10**6,
    "marginals": 10**5,
    "equicorrelation": 10**5,
    "pac-identities": 10**5,
    "naive-rate": 10**6,
    "block": 100,
    "jacobian": 1,
}


def run_suite(name: str, n: int | None = None, N: int | None = None, seed: int = 0) -> list:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    return SUITES[name](n, N or SUITE_DEFAULT_N[name], seed)


def finite_difference_jacobian(gamma, h: float = 1e-6) -> np.ndarray:
    """Central differences of vecl(C(gamma)) with respect to gamma."""
    gamma = np.asarray(gamma, dtype=float)
    d = gamma.size
    E = np.eye(d) * h
    plus = vecl(gamma_to_corr(gamma + E))
    minus = vecl(gamma_to_corr(gamma - E))
    return (plus - minus).T / (2 * h)


# -- method-level audit -------------------------------------------------------


def audit_theorems(method: str, n: int, N: int, seed: int = 0, **params) -> list:
    """Run the invariant battery that applies to one generation method."""
    rng = np.random.default_rng(seed)
    out = []
    if method == "gamma":
        law = samplers.law_from_dict(params.get("law", {"variant": "gaussian_iid"}))
        rep = bound_audit(law, n, N, rng)
        out.append(check("eigen_upper_bound", method, n, N, rep["upper_violations"], 0,
                         rep["upper_violations"] == 0, seed))
        out.append(check("eigen_lower_bound_conjectured_K_eq_n", method, n, N,
                         rep["lower_conjecture_violations"], 0, rep["lower_conjecture_violations"] == 0, seed))
        if getattr(law, "variant", None) == "gaussian_iid":
            C = gamma_to_corr(law.sample(n, rng, min(N, 10**5)))
            V = vecl(C)
            if V.shape[1] > 1:
                worst = max(ks_two_sample(V[:, 0], V[:, k]).statistic for k in range(1, V.shape[1]))
                thr = max(0.015, ks_threshold(V.shape[0] // 2))
                out.append(check("identical_marginals", method, n, V.shape[0], worst, thr, worst < thr, seed))
    elif method == "equicorrelation":
        a, b = float(params.get("alpha", 1.0)), float(params.get("beta", 1.0))
        law = samplers.EquiLaw(n, a, b)
        r = samplers.sample_equicorrelation(law, rng, N)[:, 1, 0]
        ks = ks_one_sample(r, lambda x: beta_cdf_interval(x, a, b, law.lower, 1.0))
        out.append(check("equicorrelation_beta", method, n, N, ks.statistic, ks.threshold, ks.passed, seed))
    elif method == "pac":
        alpha = float(params.get("alpha", n / 2))
        C = baselines.pac_sample(n, alpha, rng, size=N)
        det_res = float(np.max(np.abs(baselines.partial_det(baselines.corr_to_partials(C)) / np.linalg.det(C) - 1)))
        out.append(check("pac_determinant_identity", method, n, N, det_res, 1e-10, det_res < 1e-10, seed))
        if alpha == n / 2:
            naive = baselines.naive_accept(n, 2 * N, rng)
            ks = ks_two_sample(C[:, 1, 0], naive[:, 1, 0], threshold=0.015)
            out.append(check("pac_matches_naive", method, n, N, ks.statistic, ks.threshold, ks.passed, seed))
    elif method == "naive":
        p, se = validity_rate(n, max(N, 10**4), rng)
        out.append(check("naive_rate", method, n, N, p, se, True, seed, stderr=se))
        acc = baselines.naive_accept(n, max(N, 10**4), rng)
        if acc.shape[0] >= 100:
            ks = ks_one_sample(acc[:, 1, 0], lambda x: beta_cdf_interval(x, n / 2, n / 2, -1.0, 1.0), threshold=0.02)
            out.append(check("naive_beta_marginal", method, n, acc.shape[0], ks.statistic, ks.threshold,
                             ks.passed, seed))
    else:
        raise ValueError(f"no audit battery for method {method!r}")
    return out


__all__ = [
    "KSResult", "ks_one_sample", "ks_two_sample", "ks_threshold", "beta_cdf", "beta_cdf_interval",
    "logistic4_cdf", "validity_rate", "bound_audit", "audit_theorems", "run_suite", "SUITES",
    "MarginalReport", "marginal_report", "finite_difference_jacobian",
]
