import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from panelcsd.distributions import RngStream
from panelcsd.errors import DomainError, SymmetryError, TooLargeError
from panelcsd.oracles import (
    IndependenceDiagnostic,
    SphereMomentQuery,
    independence_diagnostic,
    null_statistics,
    quad_form_moments,
    rho_moments,
    run_verification,
    sphere_draws,
    sphere_moment,
    trace_brute_force,
)
from panelcsd.panel import PanelDataset, ResidualSet, ols_residuals


class TestSphereMoment:
    def test_small_cases(self):
        assert sphere_moment(5, (1,), exact=True) == Fraction(1, 5)
        assert sphere_moment(5, (2,), exact=True) == Fraction(3, 35)
        assert sphere_moment(5, (1, 1), exact=True) == Fraction(1, 35)

    def test_empty_product(self):
        assert sphere_moment(SphereMomentQuery(4, (0, 0))) == 1.0
        assert sphere_moment(3, ()) == 1.0

    def test_first_moments_sum_to_one(self):
        # sum_i U_i = 1
        for m in (2, 7, 30):
            assert m * sphere_moment(m, (1,), exact=True) == 1

    def test_second_moments_consistent(self):
        # E (sum U_i)^2 = m E U_1^2 + m(m-1) E U_1 U_2 = 1
        m = 9
        total = m * sphere_moment(m, (2,), exact=True) + m * (m - 1) * sphere_moment(m, (1, 1), exact=True)
        assert total == 1

    def test_log_space_matches_exact(self):
        q = (100, 60)
        exact = float(sphere_moment(400, q, exact=True))
        approx = sphere_moment(400, q)
        assert approx == pytest.approx(exact, rel=1e-10)

    @pytest.mark.parametrize("m, ex", [(1, (1,)), (3, (1, 1, 1, 1)), (4, (-1,)), (4, (1.5,))])
    def test_invalid(self, m, ex):
        with pytest.raises(DomainError):
            SphereMomentQuery(m, ex)

    def test_monte_carlo(self):
        d = sphere_draws(4, 400_000, RngStream(1, (0, "sphere")))
        u = d * d
        for ex, vals in [((2,), u[:, 0] ** 2), ((1, 1), u[:, 0] * u[:, 1]), ((1, 2), u[:, 0] * u[:, 1] ** 2)]:
            se = vals.std() / math.sqrt(vals.size)
            assert abs(vals.mean() - sphere_moment(4, ex)) < 4 * se


class TestQuadForm:
    def test_identity(self):
        mean, second, var = quad_form_moments(np.eye(5))
        assert (mean, var) == (pytest.approx(1.0), pytest.approx(0.0, abs=1e-15))

    def test_mean_is_trace_over_m(self):
        M = np.diag([1.0, 2.0, 3.0, 4.0])
        assert quad_form_moments(M)[0] == pytest.approx(2.5)

    def test_asymmetric(self):
        with pytest.raises(SymmetryError):
            quad_form_moments(np.array([[1.0, 2.0], [0.0, 1.0]]))
        with pytest.raises(SymmetryError):
            quad_form_moments(np.ones((2, 3)))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 8), st.integers(0, 2**32 - 1))
    def test_variance_nonnegative(self, m, seed):
        A = np.random.default_rng(seed).standard_normal((m, m))
        _, _, var = quad_form_moments(A + A.T)
        assert var >= -1e-12

    def test_monte_carlo(self):
        rng = np.random.default_rng(3)
        A = rng.standard_normal((5, 5))
        M = A + A.T
        d = sphere_draws(5, 400_000, RngStream(3, (0, "q")))
        qf = np.einsum("ni,ij,nj->n", d, M, d)
        mean, second, _ = quad_form_moments(M)
        assert abs(qf.mean() - mean) < 4 * qf.std() / math.sqrt(qf.size)
        q2 = qf * qf
        assert abs(q2.mean() - second) < 4 * q2.std() / math.sqrt(q2.size)


class TestRhoMoments:
    def test_p0(self):
        e2, _, _ = rho_moments(30, 30, 30)
        assert e2 == pytest.approx(1 / 30, abs=1e-16)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(6, 400), st.fractions(0, 1), st.fractions(0, 1))
    def test_identity_exact(self, m, u, v):
        a = m - 4 + 4 * u
        b = a * v
        e2, e4, var = rho_moments(Fraction(a), Fraction(b), m)
        assert e4 - e2 * e2 == var

    def test_identity_float(self):
        e2, e4, var = rho_moments(47.3, 45.1, 48)
        assert abs(e4 - e2 * e2 - var) < 1e-14

    def test_monte_carlo_m30(self):
        rng = np.random.default_rng(30)
        z = rng.standard_normal((100_000, 2, 30))
        e = z / np.linalg.norm(z, axis=2, keepdims=True)
        r2 = np.einsum("nt,nt->n", e[:, 0], e[:, 1]) ** 2
        assert abs(r2.mean() - 1 / 30) < 4 * r2.std() / math.sqrt(r2.size)


class TestBruteForce:
    def test_p0(self):
        res = ResidualSet(np.ones((3, 6)), np.zeros((3, 0)), np.zeros((3, 6, 0)))
        tt = trace_brute_force(res)
        assert np.allclose(tt.trace_pp, 6) and np.allclose(tt.trace_ppsq, 6)

    def test_identical_designs(self):
        rng = np.random.default_rng(2)
        x = np.broadcast_to(rng.standard_normal((15, 2)), (3, 15, 2))
        tt = trace_brute_force(ols_residuals(PanelDataset(rng.standard_normal((3, 15)), x)))
        assert np.allclose(tt.trace_pp, 13, atol=1e-12)

    def test_refuses_large(self):
        res = ResidualSet(np.ones((101, 1000)), np.zeros((101, 0)), np.zeros((101, 1000, 0)))
        with pytest.raises(TooLargeError):
            trace_brute_force(res)


class TestNullLaws:
    def test_null_statistics_shapes(self):
        s, y = null_statistics(10, 8, 20, 2, RngStream(0, (0, "n")))
        assert s.shape == (10,) and y.shape == (10,)

    def test_sum_statistic_centered(self):
        s, _ = null_statistics(300, 30, 40, 2, RngStream(1, (0, "n")))
        assert abs(s.mean()) < 4 * s.std() / math.sqrt(s.size)

    def test_independence_minimum_reps(self):
        diag = independence_diagnostic(100, 20, 20, 0, RngStream(0, (0, "i")))
        assert isinstance(diag, IndependenceDiagnostic)
        lo, hi = diag.corr_ci
        assert lo < diag.corr < hi and hi - lo > 0.3
        corr, ratio = diag
        assert corr == diag.corr and ratio == diag.joint_tail_ratio

    def test_independence_too_few_reps(self):
        with pytest.raises(DomainError):
            independence_diagnostic(99, 20, 20, 0, RngStream(0, (0, "i")))


class TestVerification:
    def test_quick_suite_passes(self):
        checks = run_verification(quick=True)
        failed = [c.name for c in checks if not c.passed]
        assert not failed, failed
        assert all(set(c.to_dict()) >= {"name", "passed", "target", "estimate", "se"} for c in checks)
