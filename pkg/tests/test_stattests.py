import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from panelcsd.correlation import CorrMatrix, residual_corr
from panelcsd.errors import DegreesOfFreedomError, DimensionError, DomainError, InputMismatchError
from panelcsd.panel import PairTraceTable, PanelDataset, ols_residuals, pair_traces
from panelcsd.stattests import (
    TestOutcome,
    adjusted_lm_constants,
    adjusted_lm_test,
    cd_test,
    max_statistic,
    max_sum_cdf,
    max_sum_test,
    max_sum_threshold,
    max_test,
    run_tests,
    sum_test,
    sum_test_mean,
)

# mpmath reference values (40 digits)
SF_MINUS_ONE = 0.8413447460685429
MAX_Y = 10.71596261117586
MAX_P = 9.391486566129449e-4
CD_STAT = 1.7320508075688772
CD_P = 0.0832645166635504
A2_M20 = 0.006198347107438017
A1_M20 = 0.003698347107438017
CN_THRESHOLD = 0.025320565519103609


def _flat(n, t, p=0):
    """Trace table for designs with tr(P_i P_j) = tr((P_i P_j)^2) = T - p."""
    m = t - p
    return PairTraceTable(np.full((n, n), float(m)), np.full((n, n), float(m)), m, t)


def _corr(n, off=0.0):
    rho = np.full((n, n), off)
    np.fill_diagonal(rho, 1.0)
    return CorrMatrix(rho)


def _outcome(test, p_value, fp="abc", n=10, t=20):
    return TestOutcome(test, 0.0, 0.0, p_value, False, 0.05, n, t, 0, fp)


class TestSumTest:
    def test_p0_mean(self):
        assert sum_test_mean(_flat(7, 30), 30) == 21.0

    def test_p0_zero_corr(self):
        out = sum_test(_corr(3), _flat(3, 10), 10)
        assert out.transformed == -1.0
        assert out.p_value == pytest.approx(SF_MINUS_ONE, abs=1e-14)
        assert not out.reject

    def test_identical_designs_mean(self):
        n, t, p = 6, 25, 3
        rng = np.random.default_rng(0)
        x = np.broadcast_to(rng.standard_normal((t, p)), (n, t, p)).copy()
        traces = pair_traces(ols_residuals(PanelDataset(rng.standard_normal((n, t)), x)))
        assert sum_test_mean(traces, t) == pytest.approx(t / (t - p) * n * (n - 1) / 2, abs=1e-10)

    def test_centered_gives_half(self):
        n, t = 4, 20
        # every rho^2 = 1/T makes S_N = N(N-1)/2 = mu_N
        out = sum_test(_corr(n, 1 / math.sqrt(t)), _flat(n, t), t)
        assert out.transformed == pytest.approx(0.0, abs=1e-12)
        assert out.p_value == pytest.approx(0.5, abs=1e-12)

    def test_rejects_strong_dependence(self):
        out = sum_test(_corr(10, 0.5), _flat(10, 50), 50)
        assert out.reject and out.p_value < 1e-10


class TestAdjustedLm:
    def test_constants_m20(self):
        a1, a2 = adjusted_lm_constants(20)
        assert a2 == pytest.approx(A2_M20, rel=1e-14)
        assert a1 == pytest.approx(A1_M20, rel=1e-14)

    @pytest.mark.parametrize("m", [0, 3, 4])
    def test_small_m(self, m):
        with pytest.raises(DegreesOfFreedomError):
            adjusted_lm_constants(m)

    def test_small_m_is_dimension_error(self):
        with pytest.raises(DimensionError):
            adjusted_lm_test(_corr(3), _flat(3, 6, 2), 6)

    def test_null_mean_gives_zero(self):
        t = 30
        out = adjusted_lm_test(_corr(5, 1 / math.sqrt(t)), _flat(5, t), t)
        assert out.statistic == pytest.approx(0.0, abs=1e-12)
        assert out.p_value == pytest.approx(0.5, abs=1e-12)

    def test_single_pair_hand_value(self):
        t, p, r = 24, 2, 0.3
        m = t - p
        tr1, tr2 = 20.5, 19.75
        traces = PairTraceTable(
            np.array([[m, tr1], [tr1, m]], float), np.array([[m, tr2], [tr2, m]], float), m, t
        )
        a2 = 3 * (((m - 8) * (m + 2) + 24) / ((m + 2) * (m - 2) * (m - 4))) ** 2
        a1 = a2 - 1 / m**2
        want = (m * r * r - tr1 / m) / math.sqrt(a1 * tr1**2 + 2 * a2 * tr2)
        out = adjusted_lm_test(_corr(2, r), traces, t)
        assert out.statistic == pytest.approx(want, rel=1e-13)


class TestMaxTest:
    def test_zero_corr(self):
        out = max_test(_corr(50), 100)
        assert out.transformed == pytest.approx(-4 * math.log(50) + math.log(math.log(50)))
        assert out.p_value > 0.999 and not out.reject

    def test_hand_value(self):
        out = max_test(_corr(50, 0.5), 100)
        assert out.transformed == pytest.approx(MAX_Y, abs=1e-12)
        assert out.p_value == pytest.approx(MAX_P, rel=1e-10)
        assert out.reject

    def test_identical_rows_flagged(self):
        out = max_test(_corr(3, 1.0), 20)
        assert out.statistic == 1.0 and out.p_value < 0.01 and out.reject

    def test_needs_three(self):
        with pytest.raises(DimensionError):
            max_test(_corr(2), 10)

    def test_n_mismatch(self):
        with pytest.raises(InputMismatchError):
            max_test(_corr(4), 10, N=5)

    def test_statistic_formula(self):
        assert max_statistic(0.0, 10, 3) == pytest.approx(-4 * math.log(3) + math.log(math.log(3)))


class TestMaxSum:
    def test_plug_in(self):
        out = max_sum_test(_outcome("SN", 0.01), _outcome("LN", 0.3))
        assert out.statistic == 0.01
        assert out.p_value == pytest.approx(0.0199, abs=1e-15)
        assert out.reject

    def test_both_one(self):
        for alpha in (0.01, 0.5, 0.999):
            out = max_sum_test(_outcome("SN", 1.0), _outcome("LN", 1.0), alpha)
            assert out.statistic == 1.0 and out.p_value == 1.0 and not out.reject

    def test_threshold(self):
        assert max_sum_threshold(0.05) == pytest.approx(CN_THRESHOLD, abs=1e-15)
        assert max_sum_test(_outcome("SN", 0.0253), _outcome("LN", 0.5)).reject
        assert not max_sum_test(_outcome("SN", 0.0254), _outcome("LN", 0.5)).reject

    def test_fingerprint_mismatch(self):
        with pytest.raises(InputMismatchError):
            max_sum_test(_outcome("SN", 0.1, fp="a"), _outcome("LN", 0.1, fp="b"))
        with pytest.raises(InputMismatchError):
            max_sum_test(_outcome("SN", 0.1, n=10), _outcome("LN", 0.1, n=11))
        with pytest.raises(InputMismatchError):
            max_sum_test(_outcome("LN", 0.1), _outcome("SN", 0.1))

    def test_cdf_monotone(self):
        w = np.linspace(0, 1, 1001)
        g = max_sum_cdf(w)
        assert g[0] == 0.0 and g[-1] == 1.0 and np.all(np.diff(g) > 0)

    def test_level_under_independent_uniforms(self):
        u = np.random.default_rng(7).random((200_000, 2))
        c = u.min(axis=1)
        assert np.mean(c < max_sum_threshold(0.05)) == pytest.approx(0.05, abs=0.003)


class TestCd:
    def test_two_sections(self):
        out = cd_test(_corr(2, 0.2), 49)
        assert out.statistic == pytest.approx(7 * 0.2, abs=1e-14)

    def test_zero(self):
        out = cd_test(_corr(5), 30)
        assert out.statistic == 0.0 and out.p_value == 1.0

    def test_hand_value(self):
        out = cd_test(_corr(3, 0.1), 100)
        assert out.statistic == pytest.approx(CD_STAT, abs=1e-14)
        assert out.p_value == pytest.approx(CD_P, abs=1e-14)
        assert not out.reject

    def test_one_sided(self):
        out = cd_test(_corr(3, 0.1), 100, alternative="greater")
        assert out.p_value == pytest.approx(CD_P / 2, abs=1e-14)
        with pytest.raises(DomainError):
            cd_test(_corr(3), 100, alternative="less-ish")


class TestDrivers:
    def _panel(self, seed, n=8, t=30, p=2):
        rng = np.random.default_rng(seed)
        return PanelDataset(rng.standard_normal((n, t)), rng.standard_normal((n, t, p)))

    def test_all_tests_and_fingerprints(self):
        out = run_tests(self._panel(0))
        assert list(out) == ["SN", "QN", "LN", "CN", "CD"]
        assert len({o.fingerprint for o in out.values()}) == 1
        assert all(0.0 <= o.p_value <= 1.0 for o in out.values())

    def test_subset(self):
        assert list(run_tests(self._panel(0), tests=["cd"])) == ["CD"]
        with pytest.raises(DomainError):
            run_tests(self._panel(0), tests=["XX"])

    def test_bad_alpha(self):
        with pytest.raises(DomainError):
            run_tests(self._panel(0), alpha=1.0)

    def test_invariant_to_scaling_and_regression_shift(self):
        d = self._panel(1)
        rng = np.random.default_rng(2)
        scale = rng.uniform(0.1, 10, size=(8, 1))
        shift = np.einsum("ntp,np->nt", d.x, rng.standard_normal((8, 2)))
        d2 = PanelDataset(d.y * scale + shift, d.x)
        a, b = run_tests(d), run_tests(d2)
        for k in a:
            assert a[k].statistic == pytest.approx(b[k].statistic, rel=1e-9, abs=1e-12)
            assert a[k].p_value == pytest.approx(b[k].p_value, rel=1e-9, abs=1e-12)

    def test_level_nesting(self):
        for seed in range(20):
            d = self._panel(seed)
            lo, hi = run_tests(d, alpha=0.01), run_tests(d, alpha=0.05)
            for k in lo:
                assert not lo[k].reject or hi[k].reject

    def test_to_dict(self):
        out = run_tests(self._panel(3))["SN"]
        d = out.to_dict()
        assert "fingerprint" not in d and d["test"] == "SN"
        assert out.to_dict(fingerprint=True)["fingerprint"] == out.fingerprint

    def test_sum_and_adjusted_lm_agree_under_null(self):
        n, t, p = 20, 30, 2
        rng = np.random.default_rng(11)
        x = rng.standard_normal((n, t, p))
        res0 = ols_residuals(PanelDataset(rng.standard_normal((n, t)), x))
        traces = pair_traces(res0)
        s, q = [], []
        for _ in range(500):
            corr = residual_corr(ols_residuals(PanelDataset(rng.standard_normal((n, t)), x)))
            s.append(sum_test(corr, traces, t).transformed)
            q.append(adjusted_lm_test(corr, traces, t).statistic)
        assert np.corrcoef(s, q)[0, 1] > 0.99

    @settings(max_examples=25, deadline=None)
    @given(st.integers(3, 10), st.integers(0, 3), st.integers(6, 30), st.integers(0, 2**32 - 1))
    def test_p_values_in_unit_interval(self, n, p, extra, seed):
        t = p + extra
        out = run_tests(self._panel(seed, n, t, p))
        for o in out.values():
            assert 0.0 <= o.p_value <= 1.0
            assert o.N == n and o.T == t
