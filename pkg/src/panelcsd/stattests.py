"""Tests for cross-sectional dependence built on residual correlations.

Five procedures share one input, the matrix of residual correlations
``rho_ij``:

* ``SN``  sum test, ``S_N = sum_{i<j} T rho_ij^2`` centred by ``mu_N`` and
  scaled by ``N``, compared with the standard normal upper tail;
* ``QN``  bias-adjusted LM statistic with pair-specific means and variances;
* ``LN``  max test, ``T L_N^2 - 4 log N + log log N`` against the type-I
  extreme-value law ``F``;
* ``CN``  max-sum test, the smaller of the SN and LN p-values, whose null law
  is ``G(w) = 2w - w^2``;
* ``CD``  the average-correlation statistic, standard normal under the null.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .correlation import CorrMatrix, residual_corr, summarize
from .distributions import gumbel_quantile, gumbel_sf, std_normal_quantile, std_normal_sf
from .errors import DegreesOfFreedomError, DimensionError, DomainError, InputMismatchError
from .panel import PairTraceTable, PanelDataset, ols_residuals, pair_traces

__all__ = [
    "TestOutcome",
    "TEST_NAMES",
    "sum_test",
    "adjusted_lm_test",
    "adjusted_lm_constants",
    "max_test",
    "max_sum_test",
    "max_sum_cdf",
    "max_sum_threshold",
    "cd_test",
    "sum_test_mean",
    "max_statistic",
    "run_tests",
    "run_tests_on_corr",
]

TEST_NAMES = ("SN", "QN", "LN", "CN", "CD")


@dataclass
class TestOutcome:
    """Result of one test.

    ``statistic`` is the raw value (S_N, Q_N, L_N, C_N or CD) and
    ``transformed`` the value on the scale the rejection rule uses.
    """

    __test__ = False  # keep pytest from collecting this class

    test: str
    statistic: float
    transformed: float
    p_value: float
    reject: bool
    alpha: float
    N: int
    T: int
    p: int
    fingerprint: str = ""

    def to_dict(self, fingerprint: bool = False) -> dict:
        d = asdict(self)
        if not fingerprint:
            d.pop("fingerprint")
        return d


def _check_alpha(alpha):
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")


def _fingerprint(corr: CorrMatrix, T: int) -> str:
    h = hashlib.sha1(np.ascontiguousarray(corr.rho).tobytes())
    h.update(str(int(T)).encode())
    return h.hexdigest()[:16]


def _check_corr(corr: CorrMatrix, min_n: int = 2):
    if corr.kind != "residual":
        raise InputMismatchError(f"tests need residual correlations, got kind={corr.kind!r}")
    if corr.n_sections < min_n:
        raise DimensionError(f"need N >= {min_n} sections, got {corr.n_sections}")


def _clip01(x: float) -> float:
    return float(min(1.0, max(0.0, x)))


# ---------------------------------------------------------------------------
# sum test


def sum_test_mean(traces: PairTraceTable, T: int) -> float:
    """``mu_N = T / m^2 * sum_{i<j} tr(P_i P_j)``."""
    tpp, _ = traces.upper()
    return float(T) / float(traces.m) ** 2 * float(np.sum(tpp))


def sum_test(corr: CorrMatrix, traces: PairTraceTable, T: int, alpha: float = 0.05) -> TestOutcome:
    """Sum test; rejects when ``(S_N - mu_N) / N`` exceeds ``z_alpha``."""
    _check_alpha(alpha)
    _check_corr(corr)
    n = corr.n_sections
    _, s_n = summarize(corr, T)
    mu = sum_test_mean(traces, T)
    z = (s_n - mu) / n
    pval = _clip01(std_normal_sf(z))
    return TestOutcome(
        "SN", s_n, z, pval, bool(z > std_normal_quantile(1.0 - alpha)), alpha,
        n, int(T), int(T - traces.m), _fingerprint(corr, T),
    )


# ---------------------------------------------------------------------------
# adjusted LM


def adjusted_lm_constants(m: int):
    """Return ``(a_1N, a_2N)`` for ``m = T - p`` residual degrees of freedom."""
    if m <= 4:
        raise DegreesOfFreedomError(f"adjusted LM test needs T - p > 4, got {m}")
    m = float(m)
    a2 = 3.0 * (((m - 8.0) * (m + 2.0) + 24.0) / ((m + 2.0) * (m - 2.0) * (m - 4.0))) ** 2
    return a2 - 1.0 / m**2, a2


def adjusted_lm_test(
    corr: CorrMatrix, traces: PairTraceTable, T: int, alpha: float = 0.05
) -> TestOutcome:
    """Bias-adjusted LM statistic ``Q_N``, one-sided against N(0, 1)."""
    _check_alpha(alpha)
    _check_corr(corr)
    m = traces.m
    a1, a2 = adjusted_lm_constants(m)
    n = corr.n_sections
    r = corr.upper()
    tpp, tppsq = traces.upper()
    mu = tpp / m
    v2 = a1 * tpp**2 + 2.0 * a2 * tppsq
    if np.any(v2 <= 0):
        raise DegreesOfFreedomError(f"non-positive variance term in adjusted LM test at m={m}")
    q = math.sqrt(2.0 / (n * (n - 1))) * float(np.sum((m * r * r - mu) / np.sqrt(v2)))
    pval = _clip01(std_normal_sf(q))
    return TestOutcome(
        "QN", q, q, pval, bool(q > std_normal_quantile(1.0 - alpha)), alpha,
        n, int(T), int(T - m), _fingerprint(corr, T),
    )


# ---------------------------------------------------------------------------
# max test


def max_statistic(l_n: float, T: int, N: int) -> float:
    """``T L_N^2 - 4 log N + log log N``."""
    return T * l_n * l_n - 4.0 * math.log(N) + math.log(math.log(N))


def max_test(corr: CorrMatrix, T: int, N: Optional[int] = None, alpha: float = 0.05,
             p: Optional[int] = None) -> TestOutcome:
    """Max test against the type-I extreme-value law.

    ``p`` only travels into the report; the limit law does not depend on the
    designs.
    """
    _check_alpha(alpha)
    _check_corr(corr, min_n=3)
    n = corr.n_sections if N is None else int(N)
    if n != corr.n_sections:
        raise InputMismatchError(f"N={n} does not match a {corr.n_sections}-section matrix")
    l_n, _ = summarize(corr, T)
    y = max_statistic(l_n, T, n)
    pval = _clip01(gumbel_sf(y))
    return TestOutcome(
        "LN", l_n, y, pval, bool(y > gumbel_quantile(alpha)), alpha,
        n, int(T), -1 if p is None else int(p), _fingerprint(corr, T),
    )


# ---------------------------------------------------------------------------
# max-sum test


def max_sum_cdf(w):
    """Null law of the max-sum statistic, ``G(w) = 2w - w^2`` on [0, 1]."""
    w = np.clip(np.asarray(w, dtype=float), 0.0, 1.0)
    out = 2.0 * w - w * w
    return float(out) if out.ndim == 0 else out


def max_sum_threshold(alpha: float) -> float:
    """Critical value ``1 - sqrt(1 - alpha)`` for ``C_N``."""
    _check_alpha(alpha)
    return 1.0 - math.sqrt(1.0 - alpha)


def max_sum_test(sum_out: TestOutcome, max_out: TestOutcome, alpha: float = 0.05) -> TestOutcome:
    """Combine an SN and an LN outcome computed on the same data."""
    _check_alpha(alpha)
    if sum_out.test != "SN" or max_out.test != "LN":
        raise InputMismatchError(
            f"max-sum test needs SN and LN outcomes, got {sum_out.test} and {max_out.test}"
        )
    if (sum_out.fingerprint != max_out.fingerprint or sum_out.N != max_out.N
            or sum_out.T != max_out.T):
        raise InputMismatchError("SN and LN outcomes were computed on different data")
    c = min(sum_out.p_value, max_out.p_value)
    return TestOutcome(
        "CN", c, c, _clip01(max_sum_cdf(c)), bool(c < max_sum_threshold(alpha)), alpha,
        sum_out.N, sum_out.T, sum_out.p, sum_out.fingerprint,
    )


# ---------------------------------------------------------------------------
# CD


def cd_test(corr: CorrMatrix, T: int, alpha: float = 0.05, alternative: str = "two-sided",
            p: Optional[int] = None) -> TestOutcome:
    """Average-correlation test, ``CD = sqrt(2T / (N(N-1))) sum_{i<j} rho_ij``.

    ``alternative`` is ``"two-sided"`` (default) or ``"greater"``.
    """
    _check_alpha(alpha)
    _check_corr(corr)
    n = corr.n_sections
    cd = math.sqrt(2.0 * T / (n * (n - 1))) * float(np.sum(corr.upper()))
    if alternative == "two-sided":
        pval = 2.0 * std_normal_sf(abs(cd))
    elif alternative == "greater":
        pval = std_normal_sf(cd)
    else:
        raise DomainError(f"alternative must be 'two-sided' or 'greater', got {alternative!r}")
    pval = _clip01(pval)
    return TestOutcome(
        "CD", cd, cd, pval, bool(pval < alpha), alpha,
        n, int(T), -1 if p is None else int(p), _fingerprint(corr, T),
    )


# ---------------------------------------------------------------------------
# drivers


def run_tests_on_corr(corr: CorrMatrix, traces: PairTraceTable, T: int, alpha: float = 0.05,
                      tests=TEST_NAMES, cd_alternative: str = "two-sided") -> dict:
    """Run the requested tests on precomputed correlations and traces."""
    tests = [t.upper() for t in tests]
    unknown = set(tests) - set(TEST_NAMES)
    if unknown:
        raise DomainError(f"unknown tests: {sorted(unknown)}")
    p = T - traces.m
    out = {}
    need_sn = "SN" in tests or "CN" in tests
    need_ln = "LN" in tests or "CN" in tests
    sn = sum_test(corr, traces, T, alpha) if need_sn else None
    ln = max_test(corr, T, alpha=alpha, p=p) if need_ln else None
    for name in TEST_NAMES:
        if name not in tests:
            continue
        if name == "SN":
            out[name] = sn
        elif name == "QN":
            out[name] = adjusted_lm_test(corr, traces, T, alpha)
        elif name == "LN":
            out[name] = ln
        elif name == "CN":
            out[name] = max_sum_test(sn, ln, alpha)
        elif name == "CD":
            out[name] = cd_test(corr, T, alpha, cd_alternative, p=p)
    return out


def run_tests(data: PanelDataset, alpha: float = 0.05, tests=TEST_NAMES,
              cd_alternative: str = "two-sided") -> dict:
    """Fit every section by OLS and run the requested tests."""
    res = ols_residuals(data)
    corr = residual_corr(res)
    traces = pair_traces(res)
    return run_tests_on_corr(corr, traces, data.n_periods, alpha, tests, cd_alternative)
