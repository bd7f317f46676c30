"""Numerical kernels shared by the model, the proposals and the sampler.

Matrices are plain ``numpy`` arrays and random streams are
``numpy.random.Generator`` instances; every stochastic routine takes the
generator explicitly so independent chains never share state.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg.lapack import dpotrf, dpotrs, dtrtrs
from scipy.special import ndtr
from scipy.stats import rankdata

from .errors import LengthMismatch, NotPositiveDefinite, SingleGroup, ZeroVariance

LEFT0 = "left"
RIGHT0 = "right"

_PIVOT_TOL = 1e-12
_SYM_TOL = 1e-10
# switch from plain rejection to the exponential proposal beyond this many SDs
_TAIL_SWITCH = 0.5

LOG_2PI = math.log(2.0 * math.pi)


def make_rng(seed: int | np.random.SeedSequence | None = None) -> np.random.Generator:
    """PCG64 generator; equal seeds give bit-identical streams."""
    return np.random.Generator(np.random.PCG64(seed))


def cholesky(m: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive-definite matrix.

    Raises
    ------
    NotPositiveDefinite
        If the factorization breaks down or a diagonal entry of the factor
        is at or below 1e-12.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if m.size == 0:
        return np.zeros_like(m)
    scale = max(float(np.max(np.abs(m))), 1.0)
    if np.max(np.abs(m - m.T)) > _SYM_TOL * scale:
        raise ValueError("matrix is not symmetric")
    try:
        L = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    if not np.all(np.diag(L) > _PIVOT_TOL):
        raise NotPositiveDefinite("pivot below tolerance")
    return L


def chol_spd(m: np.ndarray) -> np.ndarray:
    """Unchecked-symmetry Cholesky for matrices built as D'D + diag."""
    if m.size == 0:
        return np.zeros_like(m)
    L, info = dpotrf(m, lower=1, clean=1)
    if info != 0 or not np.all(np.diag(L) > _PIVOT_TOL):
        raise NotPositiveDefinite("conditional precision is not positive definite")
    return L


def chol_solve(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve (L L') x = b."""
    if L.size == 0:
        return np.zeros_like(b)
    x, _ = dpotrs(L, b, lower=1)
    return x


def sample_mvn(mean: np.ndarray, cov: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape != (mean.size, mean.size):
        raise ValueError("covariance shape does not match mean")
    L = cholesky(cov)
    return mean + L @ rng.standard_normal(mean.size)


def sample_mvn_precision(
    mean: np.ndarray, prec_chol: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Draw from N(mean, Q^-1) given the lower Cholesky factor of Q."""
    if mean.size == 0:
        return mean.copy()
    u = rng.standard_normal(mean.size)
    v, _ = dtrtrs(prec_chol, u, lower=1, trans=1)
    return mean + v


def mvn_logpdf_precision(x: np.ndarray, mean: np.ndarray, prec_chol: np.ndarray) -> float:
    """Log density of N(mean, Q^-1) at x given the lower Cholesky factor of Q."""
    d = mean.size
    if d == 0:
        return 0.0
    w = prec_chol.T @ (x - mean)
    return float(-0.5 * d * LOG_2PI + np.sum(np.log(np.diag(prec_chol))) - 0.5 * (w @ w))


def _standard_tail(lower: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Standard normal draws conditioned on ``t >= lower``, elementwise."""
    out = np.empty(lower.shape)
    near = lower <= _TAIL_SWITCH

    idx = np.flatnonzero(near)
    while idx.size:
        t = rng.standard_normal(idx.size)
        ok = t >= lower[idx]
        out[idx[ok]] = t[ok]
        idx = idx[~ok]

    idx = np.flatnonzero(~near)
    while idx.size:
        a = lower[idx]
        rate = 0.5 * (a + np.sqrt(a * a + 4.0))
        t = a + rng.standard_exponential(idx.size) / rate
        ok = rng.random(idx.size) <= np.exp(-0.5 * (t - rate) ** 2)
        out[idx[ok]] = t[ok]
        idx = idx[~ok]
    return out


def truncated_normal_at_zero(
    mean: np.ndarray, positive: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Vectorized unit-variance draws truncated at zero.

    Entry i is drawn from N(mean[i], 1) restricted to ``[0, inf)`` when
    ``positive[i]`` and to ``(-inf, 0]`` otherwise.
    """
    mean = np.asarray(mean, dtype=float)
    positive = np.asarray(positive, dtype=bool)
    signed = np.where(positive, mean, -mean)
    t = _standard_tail(-signed, rng)
    return np.where(positive, mean + t, mean - t)


def sample_truncated_normal(
    mean: float, sd: float, side: str, rng: np.random.Generator
) -> float:
    """One draw from N(mean, sd^2) truncated at zero.

    ``side=LEFT0`` keeps the half-line ``[0, inf)``; ``side=RIGHT0`` keeps
    ``(-inf, 0]``.
    """
    if not sd > 0:
        raise ValueError("sd must be positive")
    if side not in (LEFT0, RIGHT0):
        raise ValueError(f"side must be {LEFT0!r} or {RIGHT0!r}")
    if side == LEFT0:
        return float(mean + sd * _standard_tail(np.array([-mean / sd]), rng)[0])
    return float(mean - sd * _standard_tail(np.array([mean / sd]), rng)[0])


def normal_cdf(x):
    return ndtr(x)


def pearson_correlation(x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise LengthMismatch("vectors must have equal length")
    if x.size < 2:
        raise ValueError("need at least two observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = dx @ dx
    syy = dy @ dy
    if sxx == 0.0 or syy == 0.0:
        raise ZeroVariance("constant vector has no correlation")
    r = (dx @ dy) / math.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def abs_correlations(centered_cols: np.ndarray, col_norms: np.ndarray, v: np.ndarray) -> np.ndarray:
    """|cor(v, column)| for pre-centered columns; NaN where undefined."""
    dv = v - v.mean()
    sv = math.sqrt(dv @ dv)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.abs(centered_cols.T @ dv) / (col_norms * sv)
    r[~np.isfinite(r)] = np.nan
    return np.minimum(r, 1.0)


def _fast_ranks(values: np.ndarray) -> tuple[np.ndarray, float]:
    """Average ranks and the tie-correction factor."""
    order = np.argsort(values, kind="stable")
    sv = values[order]
    if np.all(sv[1:] != sv[:-1]):
        ranks = np.empty(values.size)
        ranks[order] = np.arange(1, values.size + 1)
        return ranks, 1.0
    ranks = rankdata(values)
    return ranks, _tie_correction(ranks)


def _tie_correction(ranks: np.ndarray) -> float:
    n = ranks.size
    _, counts = np.unique(ranks, return_counts=True)
    counts = counts.astype(float)
    return 1.0 - float(np.sum(counts**3 - counts)) / (n**3 - n)


def kruskal_wallis(values: np.ndarray, groups: np.ndarray) -> float:
    """Tie-corrected Kruskal-Wallis H statistic of ``values`` split by ``groups``.

    Average ranks are used for ties. Returns 0 when every value is tied.
    Only the statistic is computed; there is no p-value.
    """
    values = np.asarray(values, dtype=float)
    groups = np.asarray(groups)
    if values.shape != groups.shape:
        raise LengthMismatch("values and groups must have equal length")
    levels = np.unique(groups)
    if levels.size < 2:
        raise SingleGroup("only one level present")
    n = values.size
    ranks = rankdata(values)
    corr = _tie_correction(ranks)
    if corr <= 0.0:
        return 0.0
    total = 0.0
    for lev in levels:
        r = ranks[groups == lev]
        total += r.sum() ** 2 / r.size
    h = 12.0 / (n * (n + 1)) * total - 3.0 * (n + 1)
    return max(h / corr, 0.0)


def kruskal_wallis_columns(values: np.ndarray, stacked: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """KW statistic of ``values`` against k categorical columns at once.

    ``counts`` is an (L, k) array of level sizes per column. ``stacked`` is
    an (n, (L-1)*k) 0/1 matrix: block l marks the rows at level l for each
    column, for every level but the last. The last level's rank sum is the
    remainder, so one matrix-vector product covers all columns. Columns
    with fewer than two occupied levels give NaN.
    """
    n = values.size
    n_levels, k = counts.shape
    ranks, corr = _fast_ranks(values)
    if corr <= 0.0:
        return np.zeros(k)
    sums = np.empty((n_levels, k))
    sums[:-1] = (ranks @ stacked).reshape(n_levels - 1, k)
    sums[-1] = n * (n + 1) / 2.0 - sums[:-1].sum(axis=0)
    occupied = counts > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        total = np.where(occupied, sums**2 / counts, 0.0).sum(axis=0)
    h = (12.0 / (n * (n + 1)) * total - 3.0 * (n + 1)) / corr
    h = np.maximum(h, 0.0)
    h[occupied.sum(axis=0) < 2] = np.nan
    return h
