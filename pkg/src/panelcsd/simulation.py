"""Data-generating processes and the Monte Carlo size/power engine.

The design is a heterogeneous-slope panel: an intercept plus ``p - 1``
AR(1) regressors per section, random coefficients, and errors that are
either independent across sections (null) or mixed through ``Sigma^{1/2}``
with a block of correlated sections (alternatives).
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

import numpy as np
from scipy.signal import lfilter

from .correlation import residual_corr
from .distributions import RngStream, psd_sqrt, sample
from .errors import DomainError, PanelCSDError, SimAbortError
from .panel import PanelDataset, ols_residuals, pair_traces
from .stattests import TEST_NAMES, run_tests_on_corr

__all__ = [
    "DgpConfig",
    "SimReport",
    "ERROR_LAWS",
    "HYPOTHESES",
    "AR_COEF",
    "BURN_IN",
    "subset_size",
    "correlation_bounds",
    "gen_regressors",
    "gen_coefficients",
    "draw_sigma2",
    "build_correlation",
    "build_covariance",
    "errors_from_covariance",
    "gen_errors",
    "generate_panel",
    "simulate_replication",
    "run_monte_carlo",
    "run_power_curve",
    "power_curve_csv",
    "POWER_CURVE_SHAPE",
]

ERROR_LAWS = ("normal", "t6", "chi5")
HYPOTHESES = ("null", "nonsparse", "sparse", "power_curve")
AR_COEF = 0.6
BURN_IN = 51  # periods t = -50, ..., 0 are discarded
PD_SHIFT = 0.05
FAILURE_LIMIT = 0.01

POWER_CURVE_SHAPE = dict(N=200, T=50, p=2, error_law="normal")


@dataclass(frozen=True)
class DgpConfig:
    N: int = 50
    T: int = 50
    p: int = 2
    error_law: str = "normal"
    hypothesis: str = "null"
    n: Optional[int] = None
    replications: int = 1000
    master_seed: int = 20240601
    alpha: float = 0.05
    cardinality_rounding: str = "floor"

    def __post_init__(self):
        if self.error_law not in ERROR_LAWS:
            raise DomainError(f"error_law must be one of {ERROR_LAWS}, got {self.error_law!r}")
        if self.hypothesis not in HYPOTHESES:
            raise DomainError(f"hypothesis must be one of {HYPOTHESES}, got {self.hypothesis!r}")
        if self.p < 1:
            raise DomainError("the simulation design needs p >= 1 (intercept plus p-1 slopes)")
        if self.N < 3:
            raise DomainError("the simulation design needs N >= 3")
        if self.T <= self.p:
            raise DomainError(f"T={self.T} must exceed p={self.p}")
        if self.replications < 1:
            raise DomainError("replications must be at least 1")
        if not (0.0 < self.alpha < 1.0):
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.cardinality_rounding not in ("floor", "nearest"):
            raise DomainError("cardinality_rounding must be 'floor' or 'nearest'")
        if self.hypothesis == "power_curve":
            if self.n is None or self.n < 2:
                raise DomainError("power_curve needs a subset size n >= 2 (log n must be positive)")
            if self.n > self.N:
                raise DomainError(f"subset size n={self.n} exceeds N={self.N}")

    @classmethod
    def from_mapping(cls, values: dict) -> "DgpConfig":
        """Build a config from string or typed values, ignoring unknown keys."""
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            key = key.strip().replace("-", "_")
            if key in ("seed",):
                key = "master_seed"
            if key in ("reps",):
                key = "replications"
            if key not in known or raw is None:
                continue
            if key == "hypothesis" and isinstance(raw, str):
                m = re.fullmatch(r"\s*power_curve\((\d+)\)\s*", raw)
                if m:
                    kwargs["hypothesis"] = "power_curve"
                    kwargs["n"] = int(m.group(1))
                    continue
            if key in ("error_law", "hypothesis", "cardinality_rounding"):
                kwargs[key] = str(raw).strip()
            elif key == "alpha":
                kwargs[key] = float(raw)
            else:
                kwargs[key] = int(raw)
        return cls(**kwargs)

    def label(self) -> str:
        h = self.hypothesis if self.hypothesis != "power_curve" else f"power_curve({self.n})"
        return h


def subset_size(cfg: DgpConfig) -> int:
    """Cardinality of the correlated block: N^0.5, N^0.3 or n, at least 2.

    Non-integer powers are truncated by default (``cardinality_rounding="floor"``);
    ``"nearest"`` rounds half up instead.
    """
    if cfg.hypothesis == "power_curve":
        return int(cfg.n)
    if cfg.hypothesis == "nonsparse":
        raw = cfg.N**0.5
    elif cfg.hypothesis == "sparse":
        raw = cfg.N**0.3
    else:
        raise DomainError("the null hypothesis has no correlated block")
    # guard against 100**0.5 == 9.999... style representation error
    raw = round(raw, 9)
    k = math.floor(raw) if cfg.cardinality_rounding == "floor" else math.floor(raw + 0.5)
    return int(min(cfg.N, max(2, k)))


def correlation_bounds(cfg: DgpConfig):
    """Interval for the off-diagonal correlations inside the block."""
    log_n = math.log(cfg.N)
    if cfg.hypothesis == "nonsparse":
        lo, hi = 3.0, 5.0
    elif cfg.hypothesis == "sparse":
        lo, hi = 8.0, 10.0
    elif cfg.hypothesis == "power_curve":
        c = 1.0 / math.log(cfg.n)
        lo, hi = 8.0 * c, 10.0 * c
    else:
        raise DomainError("the null hypothesis has no correlated block")
    return math.sqrt(lo * log_n / cfg.T), math.sqrt(hi * log_n / cfg.T)


def _rng(stream):
    return stream.generator if isinstance(stream, RngStream) else stream


def gen_regressors(cfg: DgpConfig, stream, zeta2=None) -> np.ndarray:
    """Designs ``(N, T, p)``: a column of ones then ``p - 1`` AR(1) regressors.

    ``x_t = 0.6 x_{t-1} + v_t`` for ``t = -50, ..., T`` from ``x_{-51} = 0``,
    with ``v_t ~ N(0, zeta^2 / (1 - 0.36))`` and ``zeta^2 ~ chi2_6 / 6`` drawn
    once per (regressor, section). Only ``t = 1, ..., T`` is kept. Passing
    ``zeta2`` fixes the innovation scale instead of drawing it.
    """
    rng = _rng(stream)
    n, t, p = cfg.N, cfg.T, cfg.p
    x = np.ones((n, t, p))
    if p == 1:
        return x
    if zeta2 is None:
        zeta2 = sample("chi6_over6", rng, (n, p - 1))
    zeta2 = np.broadcast_to(np.asarray(zeta2, dtype=float), (n, p - 1))
    sd = np.sqrt(zeta2 / (1.0 - AR_COEF**2))
    v = rng.standard_normal((n, p - 1, t + BURN_IN)) * sd[..., None]
    path = lfilter([1.0], [1.0, -AR_COEF], v, axis=-1)
    x[:, :, 1:] = path[:, :, BURN_IN:].transpose(0, 2, 1)
    return x


def gen_coefficients(cfg: DgpConfig, stream) -> np.ndarray:
    """``(N, p)`` coefficients: intercepts ``N(0, 1)``, slopes ``N(1, 0.04)``."""
    rng = _rng(stream)
    beta = np.empty((cfg.N, cfg.p))
    beta[:, 0] = sample("std_normal", rng, cfg.N)
    if cfg.p > 1:
        beta[:, 1:] = sample("n_mu_sigma", rng, (cfg.N, cfg.p - 1), mean=1.0, var=0.04)
    return beta


def draw_sigma2(cfg: DgpConfig, stream) -> np.ndarray:
    """Section variances ``sigma_i^2 ~ (p/2) chi2_2``."""
    return 0.5 * cfg.p * sample("chi2", _rng(stream), cfg.N, df=2)


def build_correlation(cfg: DgpConfig, stream):
    """Draw the block correlation matrix and repair it to positive definiteness.

    Returns ``(R, subset, lam)`` where ``R`` already includes the shift
    ``lam * I`` with ``lam = |lambda_min| + 0.05``.
    """
    rng = _rng(stream)
    k = subset_size(cfg)
    subset = np.sort(rng.choice(cfg.N, size=k, replace=False))
    lo, hi = correlation_bounds(cfg)
    R = np.eye(cfg.N)
    iu, ju = np.triu_indices(k, k=1)
    vals = rng.uniform(lo, hi, size=iu.size)
    R[subset[iu], subset[ju]] = vals
    R[subset[ju], subset[iu]] = vals
    lam = abs(float(np.linalg.eigvalsh(R)[0])) + PD_SHIFT
    R[np.diag_indices(cfg.N)] += lam
    return R, subset, lam


def build_covariance(cfg: DgpConfig, stream, sigma2=None) -> np.ndarray:
    """``Sigma = D^{1/2} R D^{1/2}`` with ``D = diag(sigma_i^2)``."""
    rng = _rng(stream)
    if sigma2 is None:
        sigma2 = draw_sigma2(cfg, rng)
    R, _, _ = build_correlation(cfg, rng)
    s = np.sqrt(sigma2)
    return R * s[:, None] * s[None, :]


def errors_from_covariance(sigma, law: str, stream, T: int) -> np.ndarray:
    """``eps_{.t} = Sigma^{1/2} eta_t`` with i.i.d. ``eta`` entries; returns ``(N, T)``."""
    root = psd_sqrt(sigma)
    eta = sample(law, _rng(stream), (root.shape[0], T))
    return root @ eta


def gen_errors(cfg: DgpConfig, stream, cov_stream=None) -> np.ndarray:
    """Error matrix ``(N, T)`` under the configured hypothesis.

    Under the null ``eps_it = sigma_i w_it``. Under the alternatives the
    covariance is drawn from ``cov_stream`` (default: the same stream) and the
    period vectors are mixed through its square root.
    """
    rng = _rng(stream)
    if cfg.hypothesis == "null":
        sigma = np.sqrt(draw_sigma2(cfg, rng))
        return sigma[:, None] * sample(cfg.error_law, rng, (cfg.N, cfg.T))
    cov_rng = rng if cov_stream is None else _rng(cov_stream)
    sigma = build_covariance(cfg, cov_rng)
    return errors_from_covariance(sigma, cfg.error_law, rng, cfg.T)


def _streams(cfg: DgpConfig, rep: int):
    return {
        purpose: RngStream(cfg.master_seed, (rep, purpose))
        for purpose in ("regressors", "coefficients", "covariance", "errors")
    }


def generate_panel(cfg: DgpConfig, rep: int) -> PanelDataset:
    """The dataset of replication ``rep``, fully determined by ``(master_seed, rep)``."""
    s = _streams(cfg, rep)
    x = gen_regressors(cfg, s["regressors"])
    beta = gen_coefficients(cfg, s["coefficients"])
    eps = gen_errors(cfg, s["errors"], cov_stream=s["covariance"])
    y = np.einsum("ntp,np->nt", x, beta) + eps
    return PanelDataset(y=y, x=x)


def simulate_replication(cfg: DgpConfig, rep: int, tests=TEST_NAMES) -> dict:
    """Generate one panel and run the tests on it."""
    data = generate_panel(cfg, rep)
    res = ols_residuals(data)
    corr = residual_corr(res)
    traces = pair_traces(res)
    return run_tests_on_corr(corr, traces, cfg.T, cfg.alpha, tests)


# ---------------------------------------------------------------------------
# Monte Carlo driver


@dataclass
class SimReport:
    config: DgpConfig
    rejections: dict
    rates: dict
    replications_used: int
    failures: int
    elapsed: float = 0.0
    decisions: Optional[list] = field(default=None, repr=False)

    def to_dict(self, include_elapsed: bool = False) -> dict:
        d = {
            "config": asdict(self.config),
            "replications_used": self.replications_used,
            "failures": self.failures,
            "rejections": dict(self.rejections),
            "rates": dict(self.rates),
        }
        if include_elapsed:
            d["elapsed"] = self.elapsed
        if self.decisions is not None:
            d["decisions"] = self.decisions
        return d

    def to_json(self, include_elapsed: bool = False) -> str:
        return json.dumps(self.to_dict(include_elapsed), indent=2, sort_keys=False)

    def csv_rows(self):
        """One row per test: config columns then test, rejections, rate."""
        c = self.config
        for name in self.rates:
            yield [c.error_law, c.label(), c.N, c.T, c.p, c.replications, c.master_seed,
                   c.alpha, name, self.rejections[name], self.rates[name]]

    CSV_HEADER = ["error_law", "hypothesis", "N", "T", "p", "replications", "seed",
                  "alpha", "test", "rejections", "rate"]


def _run_chunk(cfg: DgpConfig, reps, tests):
    out = []
    for rep in reps:
        try:
            res = simulate_replication(cfg, rep, tests)
        except (PanelCSDError, np.linalg.LinAlgError):
            out.append((rep, None))
            continue
        out.append((rep, {k: (bool(o.reject), float(o.p_value)) for k, o in res.items()}))
    return out


def run_monte_carlo(cfg: DgpConfig, workers: int = 1, keep_decisions: bool = False,
                    tests=TEST_NAMES) -> SimReport:
    """Run every replication and aggregate rejection rates.

    Replications that fail (e.g. a numerically singular design) are counted;
    if more than 1% fail, :class:`SimAbortError` is raised. The report depends
    only on the configuration, not on ``workers``.
    """
    start = time.perf_counter()
    reps = range(cfg.replications)
    if workers <= 1:
        results = _run_chunk(cfg, reps, tests)
    else:
        chunks = [list(reps[i::workers]) for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_run_chunk, [cfg] * workers, chunks, [tests] * workers)
            results = [r for part in parts for r in part]
        results.sort(key=lambda r: r[0])

    failures = sum(1 for _, r in results if r is None)
    if failures > FAILURE_LIMIT * cfg.replications:
        raise SimAbortError(failures, cfg.replications)
    ok = [r for _, r in results if r is not None]
    names = [t for t in TEST_NAMES if t in {x.upper() for x in tests}]
    rejections = {t: sum(r[t][0] for r in ok) for t in names}
    used = len(ok)
    rates = {t: (rejections[t] / used if used else float("nan")) for t in names}
    decisions = None
    if keep_decisions:
        decisions = [
            {"rep": rep, "reject": {t: r[t][0] for t in names}, "p_value": {t: r[t][1] for t in names}}
            for rep, r in results if r is not None
        ]
    return SimReport(cfg, rejections, rates, used, failures, time.perf_counter() - start, decisions)


def run_power_curve(template: Optional[DgpConfig] = None, n_values=range(2, 17),
                    workers: int = 1, tests=TEST_NAMES):
    """Power against block alternatives of size ``n`` for each value in ``n_values``.

    The panel shape is fixed at ``N=200, T=50, p=2`` with normal errors;
    replications, seed and alpha come from ``template``.
    """
    template = template or DgpConfig()
    reports = []
    for n in n_values:
        cfg = replace(template, hypothesis="power_curve", n=int(n), **POWER_CURVE_SHAPE)
        reports.append(run_monte_carlo(cfg, workers=workers, tests=tests))
    return reports


def power_curve_csv(reports) -> str:
    """Wide CSV, one row per ``n`` and one column per test."""
    names = list(reports[0].rates) if reports else list(TEST_NAMES)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n"] + names)
    for rep in reports:
        w.writerow([rep.config.n] + [f"{rep.rates[t]:.6g}" for t in names])
    return buf.getvalue()
