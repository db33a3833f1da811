"""Pairwise sample correlations of residuals and their summaries."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateResidualError, DimensionError
from .panel import PanelDataset, ResidualSet

__all__ = ["CorrMatrix", "residual_corr", "raw_corr_variants", "summarize", "argmax_pair"]

KINDS = ("residual", "raw_noncentered", "pearson")


@dataclass
class CorrMatrix:
    rho: np.ndarray
    kind: str = "residual"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")

    @property
    def n_sections(self) -> int:
        return self.rho.shape[0]

    def upper(self) -> np.ndarray:
        return self.rho[np.triu_indices(self.rho.shape[0], k=1)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            for row in self.rho:
                w.writerow([repr(float(v)) for v in row])


def _normalized_rows(a: np.ndarray) -> np.ndarray:
    norms = np.sqrt(np.einsum("it,it->i", a, a))
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DegenerateResidualError(int(zero[0]))
    return a / norms[:, None]


def _corr_from_rows(e: np.ndarray) -> np.ndarray:
    rho = e @ e.T
    rho = 0.5 * (rho + rho.T)
    np.clip(rho, -1.0, 1.0, out=rho)
    np.fill_diagonal(rho, 1.0)
    return rho


def residual_corr(res: ResidualSet) -> CorrMatrix:
    """Uncentered correlations of OLS residuals.

    ``rho_ij = sum_t e_it e_jt / sqrt(sum_t e_it^2 * sum_t e_jt^2)``. No
    centering is applied; with an intercept in the design the residuals
    already have mean zero.
    """
    e = _normalized_rows(np.asarray(res.residuals, dtype=float))
    return CorrMatrix(_corr_from_rows(e), "residual")


def raw_corr_variants(data: PanelDataset):
    """Correlations of the raw responses, ignoring the regressors.

    Returns ``(raw_noncentered, pearson)``: the first normalises each row of
    ``y`` as is, the second subtracts the row mean first.
    """
    y = np.asarray(data.y, dtype=float)
    if y.shape[1] < 2:
        raise DimensionError("raw correlations need T >= 2")
    raw = CorrMatrix(_corr_from_rows(_normalized_rows(y)), "raw_noncentered")
    centered = y - y.mean(axis=1, keepdims=True)
    # a constant row becomes numerically tiny rather than exactly zero
    scale = np.max(np.abs(y), axis=1)
    flat = np.flatnonzero(np.max(np.abs(centered), axis=1) <= 1e-14 * np.maximum(scale, 1e-300))
    if flat.size:
        raise DegenerateResidualError(int(flat[0]), f"section {int(flat[0])} is constant")
    pearson = CorrMatrix(_corr_from_rows(_normalized_rows(centered)), "pearson")
    return raw, pearson


def summarize(corr: CorrMatrix, T: int):
    """Return ``(L_N, S_N)`` over the strict upper triangle.

    ``L_N = max_{i<j} |rho_ij|`` and ``S_N = sum_{i<j} T rho_ij^2``.
    """
    if corr.n_sections < 2:
        raise DimensionError("need at least two sections")
    r = corr.upper()
    return float(np.max(np.abs(r))), float(T * np.sum(r * r))


def argmax_pair(corr: CorrMatrix):
    """Pair ``(i, j)`` attaining ``L_N``; ties go to the lexicographically first pair."""
    if corr.n_sections < 2:
        raise DimensionError("need at least two sections")
    iu, ju = np.triu_indices(corr.n_sections, k=1)
    k = int(np.argmax(np.abs(corr.rho[iu, ju])))
    return int(iu[k]), int(ju[k])
