"""Balanced panels, per-section OLS and projection-matrix traces.

Each section i carries its own regression ``y_i = x_i beta_i + eps_i`` with a
``T x p`` design. The residual maker of section i is
``P_i = I_T - x_i (x_i' x_i)^{-1} x_i'``; it is never formed explicitly here.
Everything is expressed through an orthonormal basis ``Q_i`` of the column
space of ``x_i``, so that ``P_i = I_T - Q_i Q_i'``.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import BalanceError, DimensionError, ParseError, SingularDesignError

__all__ = [
    "PanelDataset",
    "PanelSchema",
    "ResidualSet",
    "PairTraceTable",
    "load_panel_csv",
    "ols_residuals",
    "pair_traces",
    "RANK_TOL",
]

RANK_TOL = 1e-10


@dataclass
class PanelDataset:
    """Balanced panel of ``N`` sections observed over ``T`` periods.

    Attributes
    ----------
    y : ndarray, shape (N, T)
        Responses.
    x : ndarray, shape (N, T, p)
        Per-section design matrices; ``p`` may be zero.
    unit_ids, time_ids : sequences, optional
        Labels carried over from the input file.
    """

    y: np.ndarray
    x: np.ndarray
    unit_ids: Optional[Sequence] = None
    time_ids: Optional[Sequence] = None

    def __post_init__(self):
        self.y = np.ascontiguousarray(self.y, dtype=float)
        if self.y.ndim != 2:
            raise DimensionError(f"y must be N x T, got shape {self.y.shape}")
        n, t = self.y.shape
        if self.x is None:
            self.x = np.zeros((n, t, 0))
        self.x = np.ascontiguousarray(self.x, dtype=float)
        if self.x.ndim == 2:
            # one design shared by all sections
            self.x = np.broadcast_to(self.x, (n,) + self.x.shape).copy()
        if self.x.ndim != 3 or self.x.shape[:2] != (n, t):
            raise DimensionError(
                f"x must be N x T x p matching y {self.y.shape}, got {self.x.shape}"
            )
        if t <= self.x.shape[2]:
            raise DimensionError(
                f"T={t} must exceed p={self.x.shape[2]}: rho-hat well-defined only if T>p"
            )
        if not (np.all(np.isfinite(self.y)) and np.all(np.isfinite(self.x))):
            raise ParseError("panel contains non-finite values")

    @property
    def n_sections(self) -> int:
        return self.y.shape[0]

    @property
    def n_periods(self) -> int:
        return self.y.shape[1]

    @property
    def n_regressors(self) -> int:
        return self.x.shape[2]

    N = n_sections
    T = n_periods
    p = n_regressors


@dataclass
class PanelSchema:
    """Column mapping for :func:`load_panel_csv`.

    ``x=None`` picks every column named ``x<k>`` in header order.
    """

    unit: str = "unit"
    time: str = "time"
    y: str = "y"
    x: Optional[Sequence[str]] = None
    add_intercept: bool = False


@dataclass
class ResidualSet:
    """OLS fit of every section.

    ``q_factors[i]`` is a ``T x p`` matrix with orthonormal columns spanning
    the design of section ``i``.
    """

    residuals: np.ndarray
    beta_hat: np.ndarray
    q_factors: np.ndarray

    @property
    def n_sections(self) -> int:
        return self.residuals.shape[0]

    @property
    def n_periods(self) -> int:
        return self.residuals.shape[1]

    @property
    def n_regressors(self) -> int:
        return self.q_factors.shape[2]

    @property
    def dof(self) -> int:
        return self.n_periods - self.n_regressors


@dataclass
class PairTraceTable:
    """``tr(P_i P_j)`` and ``tr((P_i P_j)^2)`` for every pair of sections."""

    trace_pp: np.ndarray
    trace_ppsq: np.ndarray
    m: int
    n_periods: int = field(default=0)

    def upper(self):
        """Strict upper-triangle entries of both tables, row-major."""
        iu = np.triu_indices(self.trace_pp.shape[0], k=1)
        return self.trace_pp[iu], self.trace_ppsq[iu]

    def to_csv(self, path) -> None:
        n = self.trace_pp.shape[0]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "trace_pp", "trace_ppsq"])
            for i in range(n):
                for j in range(i + 1, n):
                    w.writerow([i, j, repr(self.trace_pp[i, j]), repr(self.trace_ppsq[i, j])])


# ---------------------------------------------------------------------------
# CSV ingestion

_XCOL = re.compile(r"^x(\d+)$")


def _sort_labels(labels):
    try:
        return sorted(labels, key=float)
    except ValueError:
        return sorted(labels)


def load_panel_csv(path, schema: Optional[PanelSchema] = None) -> PanelDataset:
    """Read a long-format panel ``unit,time,y,x1,...,xp``.

    Rows may come in any order. Sections are ordered by unit id and periods by
    time id (numerically when every id parses as a number).

    Raises
    ------
    FileNotFoundError
        The file does not exist.
    ParseError
        Missing columns, a non-numeric cell or a duplicated (unit, time) key.
    BalanceError
        Some unit does not cover every time period exactly once.
    DimensionError
        ``T <= p`` once the optional intercept is added.
    """
    schema = schema or PanelSchema()
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path} is empty") from None
        for name in (schema.unit, schema.time, schema.y):
            if name not in header:
                raise ParseError(f"missing column {name!r} in {path}", row=1)
        if schema.x is None:
            xcols = sorted(
                (h for h in header if _XCOL.match(h)), key=lambda h: int(_XCOL.match(h).group(1))
            )
        else:
            xcols = list(schema.x)
            for name in xcols:
                if name not in header:
                    raise ParseError(f"missing column {name!r} in {path}", row=1)
        iu, it, iy = header.index(schema.unit), header.index(schema.time), header.index(schema.y)
        ix = [header.index(c) for c in xcols]

        cells = {}
        for rownum, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"expected {len(header)} fields, found {len(row)}", row=rownum
                )
            unit, time = row[iu].strip(), row[it].strip()
            vals = []
            for k in [iy] + ix:
                try:
                    v = float(row[k])
                except ValueError:
                    raise ParseError(
                        f"non-numeric value {row[k]!r}", row=rownum, col=header[k]
                    ) from None
                if not math.isfinite(v):
                    raise ParseError(f"non-finite value {row[k]!r}", row=rownum, col=header[k])
                vals.append(v)
            key = (unit, time)
            if key in cells:
                raise ParseError(f"duplicate observation for unit {unit}, time {time}", row=rownum)
            cells[key] = vals

    if not cells:
        raise ParseError(f"{path} contains no observations")
    by_unit: dict = {}
    for unit, time in cells:
        by_unit.setdefault(unit, set()).add(time)
    all_times = set().union(*by_unit.values())
    bad = [u for u, ts in by_unit.items() if ts != all_times]
    if bad:
        raise BalanceError(_sort_labels(bad))

    units = _sort_labels(by_unit)
    times = _sort_labels(all_times)
    n, t, p = len(units), len(times), len(xcols)
    data = np.empty((n, t, 1 + p))
    for a, u in enumerate(units):
        for b, s in enumerate(times):
            data[a, b] = cells[(u, s)]
    y = data[:, :, 0]
    x = data[:, :, 1:]
    if schema.add_intercept:
        x = np.concatenate([np.ones((n, t, 1)), x], axis=2)
    if t <= x.shape[2]:
        raise DimensionError(
            f"T={t} must exceed p={x.shape[2]}: rho-hat well-defined only if T>p"
        )
    return PanelDataset(y=y, x=x, unit_ids=units, time_ids=times)


# ---------------------------------------------------------------------------
# OLS and traces


def ols_residuals(data: PanelDataset, rank_tol: float = RANK_TOL) -> ResidualSet:
    """Section-by-section OLS through a reduced QR factorisation.

    A design whose smallest singular value is at most ``rank_tol`` times its
    largest is rejected with :class:`SingularDesignError`.
    """
    y, x = data.y, data.x
    n, t, p = x.shape
    if p == 0:
        return ResidualSet(residuals=y.copy(), beta_hat=np.zeros((n, 0)), q_factors=np.zeros((n, t, 0)))

    sv = np.linalg.svd(x, compute_uv=False)
    bad = np.flatnonzero(~(sv[:, -1] > rank_tol * sv[:, 0]))
    if bad.size:
        raise SingularDesignError(int(bad[0]))

    q, r = np.linalg.qr(x, mode="reduced")
    qty = np.einsum("ntp,nt->np", q, y)
    beta = np.linalg.solve(r, qty[..., None])[..., 0]
    resid = y - np.einsum("ntp,np->nt", q, qty)
    return ResidualSet(residuals=resid, beta_hat=beta, q_factors=q)


def pair_traces(res: ResidualSet) -> PairTraceTable:
    """Pairwise traces from the ``p x p`` cross-Gram matrices ``G = Q_i' Q_j``.

    With ``A_i = Q_i Q_i'`` the residual makers satisfy
    ``tr(P_i P_j) = T - 2p + ||G||_F^2`` and
    ``tr((P_i P_j)^2) = T - 2p + tr((G G')^2)`` for ``i != j``; on the diagonal
    both equal ``T - p``.
    """
    q = res.q_factors
    n, t, p = q.shape
    m = t - p
    if p == 0:
        full = np.full((n, n), float(t))
        return PairTraceTable(trace_pp=full, trace_ppsq=full.copy(), m=m, n_periods=t)

    flat = q.transpose(0, 2, 1).reshape(n * p, t)
    gram = (flat @ flat.T).reshape(n, p, n, p).transpose(0, 2, 1, 3)
    fro2 = np.einsum("ijab,ijab->ij", gram, gram)
    ggt = np.einsum("ijab,ijcb->ijac", gram, gram)
    fro4 = np.einsum("ijac,ijac->ij", ggt, ggt)

    base = float(t - 2 * p)
    tpp = base + fro2
    tppsq = base + fro4
    tpp = 0.5 * (tpp + tpp.T)
    tppsq = 0.5 * (tppsq + tppsq.T)
    np.fill_diagonal(tpp, float(m))
    np.fill_diagonal(tppsq, float(m))
    return PairTraceTable(trace_pp=tpp, trace_ppsq=tppsq, m=m, n_periods=t)
