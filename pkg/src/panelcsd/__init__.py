"""Tests for cross-sectional dependence in high-dimensional panel regressions.

Sum (LM), bias-adjusted LM, max, max-sum and CD tests on OLS residual
correlations, with the Monte Carlo designs used to study their size and power.
"""

__version__ = "0.1.0"

from .correlation import CorrMatrix, raw_corr_variants, residual_corr, summarize
from .panel import (
    PairTraceTable,
    PanelDataset,
    PanelSchema,
    ResidualSet,
    load_panel_csv,
    ols_residuals,
    pair_traces,
)
from .stattests import (
    TEST_NAMES,
    TestOutcome,
    adjusted_lm_test,
    cd_test,
    max_sum_test,
    max_test,
    run_tests,
    sum_test,
)

__all__ = [
    "CorrMatrix",
    "PairTraceTable",
    "PanelDataset",
    "PanelSchema",
    "ResidualSet",
    "TEST_NAMES",
    "TestOutcome",
    "adjusted_lm_test",
    "cd_test",
    "load_panel_csv",
    "max_sum_test",
    "max_test",
    "ols_residuals",
    "pair_traces",
    "raw_corr_variants",
    "residual_corr",
    "run_tests",
    "sum_test",
    "summarize",
]
