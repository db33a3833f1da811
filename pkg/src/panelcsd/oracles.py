"""Closed-form moment identities and brute-force references.

These are an independent correctness layer for the fast paths elsewhere in
the package: exact sphere moments, quadratic forms in a uniform unit vector,
the null moments of squared residual correlations, a dense-matrix version of
the pairwise traces, and Monte Carlo checks of the null limit laws. The
:func:`run_verification` suite bundles them for the ``verify`` command.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .correlation import raw_corr_variants, residual_corr
from .distributions import RngStream, gumbel_cdf, gumbel_quantile, std_normal_cdf, std_normal_quantile
from .errors import DomainError, SymmetryError, TooLargeError
from .panel import PairTraceTable, PanelDataset, ResidualSet, ols_residuals, pair_traces
from .stattests import max_statistic, sum_test_mean

__all__ = [
    "SphereMomentQuery",
    "sphere_moment",
    "sphere_draws",
    "quad_form_moments",
    "rho_moments",
    "trace_brute_force",
    "null_statistics",
    "independence_diagnostic",
    "IndependenceDiagnostic",
    "approximation_gap",
    "Check",
    "run_verification",
]

_LOG_SPACE_ABOVE = 150


@dataclass(frozen=True)
class SphereMomentQuery:
    m: int
    exponents: tuple

    def __post_init__(self):
        if self.m < 2:
            raise DomainError(f"sphere dimension must be >= 2, got {self.m}")
        if any(int(a) != a or a < 0 for a in self.exponents):
            raise DomainError("exponents must be nonnegative integers")
        if len(self.exponents) > self.m:
            raise DomainError("at most m exponents")


def _double_factorial_odd(a: int) -> int:
    """(2a - 1)!! with (-1)!! = 1."""
    out = 1
    for k in range(1, 2 * a, 2):
        out *= k
    return out


def sphere_moment(q, exponents: Sequence[int] = None, exact: bool = False):
    """``E(U_1^{a_1} ... U_k^{a_k})`` for ``U_i = Z_i^2 / sum_j Z_j^2``.

    Equals ``prod_i (2 a_i - 1)!! / prod_{i=1}^{a} (m + 2i - 2)`` with
    ``a = sum a_i``. Accepts a :class:`SphereMomentQuery` or ``(m, exponents)``.
    With ``exact=True`` a :class:`fractions.Fraction` is returned.
    """
    if not isinstance(q, SphereMomentQuery):
        q = SphereMomentQuery(int(q), tuple(int(a) for a in exponents))
    m, ex = q.m, q.exponents
    a = sum(ex)
    if a <= _LOG_SPACE_ABOVE or exact:
        num = 1
        for ai in ex:
            num *= _double_factorial_odd(ai)
        den = 1
        for i in range(1, a + 1):
            den *= m + 2 * i - 2
        val = Fraction(num, den)
        return val if exact else float(val)
    # log-space: log (2a-1)!! = lgamma(2a+1) - a log 2 - lgamma(a+1)
    log_num = sum(math.lgamma(2 * ai + 1) - ai * math.log(2) - math.lgamma(ai + 1) for ai in ex)
    # prod_{i=1}^a (m + 2i - 2) = 2^a Gamma(m/2 + a) / Gamma(m/2)
    log_den = a * math.log(2) + math.lgamma(m / 2 + a) - math.lgamma(m / 2)
    return math.exp(log_num - log_den)


def sphere_draws(m: int, size: int, stream) -> np.ndarray:
    """``size`` points uniform on the unit sphere in R^m, one per row."""
    rng = stream.generator if isinstance(stream, RngStream) else np.random.default_rng(stream)
    z = rng.standard_normal((size, m))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def quad_form_moments(M):
    """Mean, second moment and variance of ``d' M d`` for ``d`` uniform on the sphere.

    ``E = tr(M)/m`` and ``E[(d'Md)^2] = (2 tr(M^2) + tr(M)^2) / (m(m+2))``.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise SymmetryError(f"expected a square matrix, got shape {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if not np.allclose(M, M.T, rtol=0.0, atol=1e-12 * scale):
        raise SymmetryError("matrix is not symmetric")
    m = M.shape[0]
    if m < 2:
        raise DomainError("dimension must be at least 2")
    tr = float(np.trace(M))
    tr2 = float(np.sum(M * M.T))
    mean = tr / m
    second = (2.0 * tr2 + tr * tr) / (m * (m + 2))
    return mean, second, second - mean * mean


def rho_moments(trace_pp, trace_ppsq, m):
    """Null moments of ``rho_ij^2`` for Gaussian errors.

    Returns ``(E rho^2, E rho^4, Var rho^2)``. Inputs may be ``Fraction``
    instances, in which case the arithmetic is exact.
    """
    a, b = trace_pp, trace_ppsq
    if isinstance(a, Fraction) or isinstance(b, Fraction):
        a, b, m = Fraction(a), Fraction(b), Fraction(m)
    else:
        a, b, m = float(a), float(b), float(m)
    e2 = a / m**2
    e4 = 3 * (2 * b + a * a) / (m**2 * (m + 2) ** 2)
    var = 6 * b / (m**2 * (m + 2) ** 2) + 2 * (m * m - 2 * m - 2) * a * a / (m**4 * (m + 2) ** 2)
    return e2, e4, var


def trace_brute_force(res: ResidualSet, limit: float = 1e8) -> PairTraceTable:
    """Pairwise traces from explicit ``T x T`` residual makers."""
    q = res.q_factors
    n, t, p = q.shape
    if n * t * t > limit:
        raise TooLargeError(f"N*T^2 = {n * t * t:.3g} exceeds the dense-oracle limit {limit:.3g}")
    P = np.eye(t)[None, :, :] - np.einsum("nip,njp->nij", q, q)
    tpp = np.empty((n, n))
    tppsq = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            prod = P[i] @ P[j]
            tpp[i, j] = tpp[j, i] = np.trace(prod)
            tppsq[i, j] = tppsq[j, i] = np.trace(prod @ prod)
    return PairTraceTable(trace_pp=tpp, trace_ppsq=tppsq, m=t - p, n_periods=t)


# ---------------------------------------------------------------------------
# Monte Carlo diagnostics of the null limit laws


def _ar_designs(N, T, p, rng):
    from .simulation import DgpConfig, gen_regressors

    cfg = DgpConfig(N=max(N, 3), T=T, p=p, replications=1)
    return gen_regressors(cfg, rng)[:N]


def null_statistics(reps: int, N: int, T: int, p: int, stream):
    """Standardised sum and max statistics over ``reps`` Gaussian null panels.

    For ``p > 0`` one set of designs (intercept plus AR(1) regressors) is drawn
    first and held fixed. Returns ``(sum_z, max_y)``, each of length ``reps``,
    where ``sum_z = (S_N - mu_N)/N`` and ``max_y = T L_N^2 - 4 log N + log log N``.
    """
    rng = stream.generator if isinstance(stream, RngStream) else np.random.default_rng(stream)
    if p > 0:
        x = _ar_designs(N, T, p, rng)
        q, _ = np.linalg.qr(x, mode="reduced")
        traces = pair_traces(ResidualSet(np.zeros((N, T)), np.zeros((N, p)), q))
    else:
        q = None
        traces = PairTraceTable(np.full((N, N), float(T)), np.full((N, N), float(T)), T, T)
    mu = sum_test_mean(traces, T)
    iu = np.triu_indices(N, k=1)
    sum_z = np.empty(reps)
    max_y = np.empty(reps)
    for r in range(reps):
        eps = rng.standard_normal((N, T))
        if q is not None:
            eps = eps - np.einsum("ntp,np->nt", q, np.einsum("ntp,nt->np", q, eps))
        e = eps / np.linalg.norm(eps, axis=1, keepdims=True)
        rho = (e @ e.T)[iu]
        sum_z[r] = (T * float(np.sum(rho * rho)) - mu) / N
        max_y[r] = max_statistic(float(np.max(np.abs(rho))), T, N)
    return sum_z, max_y


@dataclass
class IndependenceDiagnostic:
    """Empirical dependence between the sum and max statistics.

    Iterating yields ``(corr, joint_tail_ratio)``.
    """

    corr: float
    joint_tail_ratio: float
    reps: int
    corr_ci: tuple = field(default=(float("nan"), float("nan")))
    ratio_se: float = float("nan")

    def __iter__(self):
        yield self.corr
        yield self.joint_tail_ratio


def independence_diagnostic(reps: int, N: int, T: int, p: int, stream) -> IndependenceDiagnostic:
    """Correlation and joint upper-tail ratio of the sum and max statistics.

    The ratio is ``P(both exceed their empirical 80th percentiles) / 0.04``,
    which is 1 under independence.
    """
    if reps < 100:
        raise DomainError(f"independence diagnostic needs reps >= 100, got {reps}")
    s, y = null_statistics(reps, N, T, p, stream)
    return _independence_from_samples(s, y)


def _independence_from_samples(s, y) -> IndependenceDiagnostic:
    reps = len(s)
    corr = float(np.corrcoef(s, y)[0, 1])
    both = np.mean((s > np.quantile(s, 0.8)) & (y > np.quantile(y, 0.8)))
    ratio = float(both / 0.04)
    half = 1.959963984540054 / math.sqrt(reps - 3)
    z = math.atanh(max(-0.999999, min(0.999999, corr)))
    ci = (math.tanh(z - half), math.tanh(z + half))
    ratio_se = math.sqrt(0.04 * 0.96 / reps) / 0.04
    return IndependenceDiagnostic(corr, ratio, reps, ci, ratio_se)


def approximation_gap(N: int, T: int, p: int, reps: int, stream) -> np.ndarray:
    """``sqrt(T log N) * max_{i<j} |rho_hat_ij - rho_tilde_ij|`` per replication.

    ``rho_hat`` uses OLS residuals, ``rho_tilde`` the unobserved errors
    themselves (normalised, uncentred). Designs are redrawn every replication.
    """
    rng = stream.generator if isinstance(stream, RngStream) else np.random.default_rng(stream)
    out = np.empty(reps)
    iu = np.triu_indices(N, k=1)
    for r in range(reps):
        x = _ar_designs(N, T, p, rng)
        eps = rng.standard_normal((N, T))
        rho_hat = residual_corr(ols_residuals(PanelDataset(eps, x))).rho
        rho_til, _ = raw_corr_variants(PanelDataset(eps, np.zeros((N, T, 0))))
        out[r] = math.sqrt(T * math.log(N)) * float(np.max(np.abs(rho_hat[iu] - rho_til.rho[iu])))
    return out


# ---------------------------------------------------------------------------
# verification suite


@dataclass
class Check:
    name: str
    passed: bool
    target: float = float("nan")
    estimate: float = float("nan")
    se: float = float("nan")
    tolerance: float = float("nan")
    detail: str = ""

    def to_dict(self):
        return asdict(self)


def _mc_check(name, target, samples, k=4.0):
    samples = np.asarray(samples, dtype=float)
    est = float(samples.mean())
    se = float(samples.std(ddof=1) / math.sqrt(samples.size))
    return Check(name, abs(est - target) <= k * se, target, est, se, k * se, f"{samples.size} draws")


def _exact_check(name, target, estimate, tol=0.0):
    ok = abs(float(estimate) - float(target)) <= tol
    return Check(name, bool(ok), float(target), float(estimate), 0.0, tol)


def run_verification(seed: int = 20240601, quick: bool = False) -> list:
    """Run the oracle suite and return a list of :class:`Check` results."""
    checks = []
    root = RngStream(seed, (0, "verify"))
    rng = root.generator

    # sphere moments
    checks.append(_exact_check("sphere_moment m=5 a=(1)", Fraction(1, 5), sphere_moment(5, (1,), exact=True)))
    checks.append(_exact_check("sphere_moment m=5 a=(2)", Fraction(3, 35), sphere_moment(5, (2,), exact=True)))
    checks.append(_exact_check("sphere_moment m=5 a=(1,1)", Fraction(1, 35), sphere_moment(5, (1, 1), exact=True)))
    checks.append(_exact_check("sphere_moment all zero", 1, sphere_moment(7, (0, 0, 0), exact=True)))
    n_mc = 200_000 if quick else 1_000_000
    d = sphere_draws(5, n_mc, RngStream(seed, (1, "sphere")))
    u = d * d
    checks.append(_mc_check("sphere_moment MC m=5 a=(2)", 3 / 35, u[:, 0] ** 2))
    checks.append(_mc_check("sphere_moment MC m=5 a=(1,1)", 1 / 35, u[:, 0] * u[:, 1]))
    checks.append(_mc_check("sphere_moment MC m=5 a=(2,1)", sphere_moment(5, (2, 1)), u[:, 0] ** 2 * u[:, 1]))

    # quadratic forms
    checks.append(_exact_check("quad_form I_m variance", 0.0, quad_form_moments(np.eye(6))[2], 1e-15))
    e1 = np.zeros((5, 5))
    e1[0, 0] = 1.0
    checks.append(_exact_check("quad_form diag(1,0,..) second = 3/35", 3 / 35, quad_form_moments(e1)[1], 1e-15))
    A = rng.standard_normal((6, 6))
    M = A + A.T
    mean, second, _ = quad_form_moments(M)
    d6 = sphere_draws(6, n_mc, RngStream(seed, (2, "sphere")))
    qf = np.einsum("ni,ij,nj->n", d6, M, d6)
    checks.append(_mc_check("quad_form MC mean", mean, qf))
    checks.append(_mc_check("quad_form MC second moment", second, qf * qf))

    # rho moments: exact identity on rational inputs
    worst = Fraction(0)
    for a, b, m in [(30, 30, 30), (47, 46, 48), (Fraction(191, 4), Fraction(185, 4), 48), (18, 17, 20)]:
        e2, e4, var = rho_moments(Fraction(a), Fraction(b), m)
        worst = max(worst, abs(e4 - e2 * e2 - var))
    checks.append(_exact_check("rho_moments E4 - E2^2 == Var (exact)", 0, worst))
    checks.append(_exact_check("rho_moments p=0 E rho^2 = 1/m", 1 / 30, rho_moments(30, 30, 30)[0], 1e-16))

    # rho moments against simulation, p in {0, 2, 4}
    n_pairs = 20_000 if quick else 100_000
    T = 30
    for p in (0, 2, 4):
        prng = RngStream(seed, (3 + p, "rho"))
        g = prng.generator
        if p:
            x = _ar_designs(2, T, p, g)
            q, _ = np.linalg.qr(x, mode="reduced")
            tt = pair_traces(ResidualSet(np.zeros((2, T)), np.zeros((2, p)), q))
            a, b = tt.trace_pp[0, 1], tt.trace_ppsq[0, 1]
        else:
            q = None
            a = b = float(T)
        m = T - p
        e2, e4, _ = rho_moments(a, b, m)
        eps = g.standard_normal((n_pairs, 2, T))
        if q is not None:
            eps = eps - np.einsum("ktp,nkp->nkt", q, np.einsum("ktp,nkt->nkp", q, eps))
        e = eps / np.linalg.norm(eps, axis=2, keepdims=True)
        r2 = np.einsum("nt,nt->n", e[:, 0], e[:, 1]) ** 2
        checks.append(_mc_check(f"rho_moments MC E rho^2 (m={m}, p={p})", e2, r2))
        checks.append(_mc_check(f"rho_moments MC E rho^4 (m={m}, p={p})", e4, r2 * r2))

    # traces: Gram identities against dense products
    worst_rel = 0.0
    for k in range(20):
        p = (0, 1, 3)[k % 3]
        g = RngStream(seed, (100 + k, "traces")).generator
        x = g.standard_normal((5, 20, p))
        res = ols_residuals(PanelDataset(g.standard_normal((5, 20)), x))
        fast, slow = pair_traces(res), trace_brute_force(res)
        for f, s in ((fast.trace_pp, slow.trace_pp), (fast.trace_ppsq, slow.trace_ppsq)):
            worst_rel = max(worst_rel, float(np.max(np.abs(f - s) / np.abs(s))))
    checks.append(Check("pair_traces == trace_brute_force (20 instances)", worst_rel <= 1e-8,
                        0.0, worst_rel, 0.0, 1e-8, "max relative difference"))

    # special-case means of the sum statistic
    N, T, p = 10, 40, 3
    ones = np.zeros((N, T, 0))
    res0 = ols_residuals(PanelDataset(rng.standard_normal((N, T)), ones))
    checks.append(_exact_check("mu_N p=0 = N(N-1)/2", N * (N - 1) / 2, sum_test_mean(pair_traces(res0), T), 1e-10))
    xs = np.broadcast_to(rng.standard_normal((T, p)), (N, T, p))
    res1 = ols_residuals(PanelDataset(rng.standard_normal((N, T)), xs))
    target = T / (T - p) * N * (N - 1) / 2
    checks.append(_exact_check("mu_N identical designs = T/(T-p) N(N-1)/2", target,
                               sum_test_mean(pair_traces(res1), T), 1e-10 * target))

    # distribution functions
    worst = max(abs(std_normal_cdf(std_normal_quantile(u)) - u) for u in np.linspace(1e-6, 1 - 1e-6, 101))
    checks.append(_exact_check("normal cdf(quantile(u)) == u", 0.0, worst, 1e-12))
    worst = max(abs(gumbel_cdf(gumbel_quantile(a)) - (1 - a)) for a in np.linspace(1e-6, 1 - 1e-6, 101))
    checks.append(_exact_check("gumbel cdf(quantile(a)) == 1 - a", 0.0, worst, 1e-12))

    # asymptotic independence of sum and max; quick runs widen the bands to
    # about 3.5 standard errors of their smaller sample
    reps = 400 if quick else 2000
    diag = independence_diagnostic(reps, 200, 200, 0, RngStream(seed, (9, "independence")))
    corr_tol = 3.5 / math.sqrt(reps) if quick else 0.08
    ratio_tol = 3.5 * diag.ratio_se if quick else 0.3
    checks.append(Check(f"independence |corr(sum, max)| < {corr_tol:.3g}", abs(diag.corr) < corr_tol,
                        0.0, diag.corr, float("nan"), corr_tol, f"{reps} reps, 95% CI {diag.corr_ci}"))
    checks.append(Check(f"independence joint tail ratio within 1 +/- {ratio_tol:.3g}",
                        abs(diag.joint_tail_ratio - 1.0) <= ratio_tol, 1.0, diag.joint_tail_ratio,
                        diag.ratio_se, ratio_tol, f"{reps} reps"))
    return checks
