"""Probability kernels used by the tests and by the simulation engine.

Normal and type-I extreme-value distribution functions, the samplers the
data-generating processes need, a split-stream random number scheme and a
symmetric square root for positive semi-definite matrices.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import DomainError, NotPsdError

__all__ = [
    "std_normal_cdf",
    "std_normal_sf",
    "std_normal_quantile",
    "gumbel_cdf",
    "gumbel_sf",
    "gumbel_quantile",
    "GumbelTypeI",
    "RngStream",
    "sample",
    "LAWS",
    "psd_sqrt",
]

_SQRT_8PI = np.sqrt(8.0 * np.pi)


def std_normal_cdf(x):
    """Standard normal distribution function Phi(x)."""
    return special.ndtr(x)


def std_normal_sf(x):
    """Upper tail 1 - Phi(x), computed without cancellation."""
    return special.ndtr(-np.asarray(x, dtype=float))


def std_normal_quantile(u):
    """Inverse of :func:`std_normal_cdf` on the open unit interval."""
    arr = np.asarray(u, dtype=float)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise DomainError(f"normal quantile requires u in (0, 1), got {u!r}")
    out = special.ndtri(arr)
    return float(out) if np.ndim(out) == 0 else out


def gumbel_cdf(y):
    """F(y) = exp(-exp(-y/2) / sqrt(8 pi)), the limit law of the max statistic."""
    y = np.asarray(y, dtype=float)
    with np.errstate(over="ignore"):
        out = np.exp(-np.exp(-y / 2.0) / _SQRT_8PI)
    return float(out) if out.ndim == 0 else out


def gumbel_sf(y):
    """1 - F(y), accurate far into the upper tail."""
    y = np.asarray(y, dtype=float)
    with np.errstate(over="ignore"):
        out = -np.expm1(-np.exp(-y / 2.0) / _SQRT_8PI)
    return float(out) if out.ndim == 0 else out


def gumbel_quantile(alpha):
    """Upper-alpha critical value q_alpha, i.e. F(q_alpha) = 1 - alpha.

    ``q_alpha = -log(8 pi) - 2 log(-log(1 - alpha))``.
    """
    a = np.asarray(alpha, dtype=float)
    if np.any(~((a > 0.0) & (a < 1.0))):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    out = -np.log(8.0 * np.pi) - 2.0 * np.log(-np.log1p(-a))
    return float(out) if out.ndim == 0 else out


class GumbelTypeI:
    """The fixed extreme-value law F(y) = exp(-e^{-y/2}/sqrt(8 pi))."""

    cdf = staticmethod(gumbel_cdf)
    sf = staticmethod(gumbel_sf)

    @staticmethod
    def ppf(u):
        u = np.asarray(u, dtype=float)
        return gumbel_quantile(1.0 - u)


# ---------------------------------------------------------------------------
# random streams


def _purpose_code(purpose) -> int:
    if isinstance(purpose, (int, np.integer)):
        return int(purpose)
    return zlib.crc32(str(purpose).encode("utf-8"))


@dataclass
class RngStream:
    """An independent random stream identified by ``(master_seed, stream_id)``.

    ``stream_id`` is a ``(replication, purpose)`` pair. The key is mixed by
    :class:`numpy.random.SeedSequence` and drives a counter-based Philox
    generator, so a stream never depends on how many draws other streams
    consumed or on the order in which replications are executed.
    """

    master_seed: int
    stream_id: tuple = (0, "default")
    _gen: np.random.Generator | None = field(default=None, init=False, repr=False, compare=False)

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            rep, purpose = self.stream_id
            seq = np.random.SeedSequence(
                entropy=int(self.master_seed) & (2**64 - 1),
                spawn_key=(int(rep), _purpose_code(purpose)),
            )
            self._gen = np.random.Generator(np.random.Philox(seq))
        return self._gen

    def child(self, replication, purpose) -> "RngStream":
        return RngStream(self.master_seed, (replication, purpose))


def _as_generator(stream) -> np.random.Generator:
    if isinstance(stream, RngStream):
        return stream.generator
    if isinstance(stream, np.random.Generator):
        return stream
    return np.random.default_rng(stream)


# Laws with their theoretical mean and variance, used by the moment checks.
LAWS = {
    "std_normal": (0.0, 1.0),
    "t6_norm": (0.0, 1.0),
    "chi5_norm": (0.0, 1.0),
    "chi6_over6": (1.0, 1.0 / 3.0),
}

_ALIASES = {"normal": "std_normal", "t6": "t6_norm", "chi5": "chi5_norm"}


def sample(dist: str, stream, count, *, df=None, mean=None, var=None) -> np.ndarray:
    """Draw ``count`` variates from a named law.

    Parameters
    ----------
    dist : str
        One of ``std_normal``, ``t6_norm`` (t_6 / sqrt(6/4)), ``chi5_norm``
        ((chi2_5 - 5) / sqrt(10)), ``chi2`` (needs ``df``), ``chi6_over6``
        (chi2_6 / 6) or ``n_mu_sigma`` (needs ``mean`` and ``var``). The
        error-law tags ``normal``, ``t6`` and ``chi5`` are accepted as aliases.
    stream : RngStream, numpy Generator or seed
    count : int or tuple
        Output shape.
    """
    rng = _as_generator(stream)
    dist = _ALIASES.get(dist, dist)
    if dist == "std_normal":
        return rng.standard_normal(count)
    if dist == "t6_norm":
        return rng.standard_t(6, count) / np.sqrt(6.0 / 4.0)
    if dist == "chi5_norm":
        return (rng.chisquare(5, count) - 5.0) / np.sqrt(10.0)
    if dist == "chi2":
        if df is None or df <= 0:
            raise DomainError("chi2 sampling needs a positive df")
        return rng.chisquare(df, count)
    if dist == "chi6_over6":
        return rng.chisquare(6, count) / 6.0
    if dist == "n_mu_sigma":
        if mean is None or var is None or var < 0:
            raise DomainError("n_mu_sigma sampling needs mean and a nonnegative var")
        return rng.normal(mean, np.sqrt(var), count)
    raise DomainError(f"unknown distribution {dist!r}")


# ---------------------------------------------------------------------------
# matrix square root


def psd_sqrt(S, tol: float = 1e-10) -> np.ndarray:
    """Symmetric square root of a positive semi-definite matrix.

    Eigenvalues in ``[-tol * ||S||, 0)`` are treated as rounding noise and
    clamped to zero; anything more negative raises :class:`NotPsdError`.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise NotPsdError(f"expected a square matrix, got shape {S.shape}")
    S = 0.5 * (S + S.T)
    w, V = np.linalg.eigh(S)
    scale = np.max(np.abs(w)) if w.size else 0.0
    if w.size and w[0] < -tol * scale:
        raise NotPsdError(f"matrix has eigenvalue {w[0]:.3e} below -{tol:g}*||S||")
    root = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T
    return 0.5 * (root + root.T)
